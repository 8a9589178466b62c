#pragma once

#include <string>
#include <vector>

namespace fbgpr {

// Built-in datasets for tests and examples.  `airline` is the classic
// monthly airline passenger series (public domain, small enough to embed);
// the rest are synthetic draws from known kernel hyperparameters, sized to
// mirror the benchmark datasets the harness targets.  All generators are
// deterministic.

std::string airline_csv();   // N=144, d=1: columns year, passengers
std::string seasonal_csv();  // N=732, d=1: smooth trend + yearly cycle surrogate
std::string tabular_csv();   // N=1599, d=11: few active inputs, iid feature noise
std::string blend_csv();     // N=1030, d=8: same recipe at a different shape
std::string toy_csv();       // N=40, d=1: seconds-fast smoke data

// Writes all fixture CSVs into dir (created if needed); returns the paths.
std::vector<std::string> write_fixtures(const std::string& dir);

}  // namespace fbgpr
