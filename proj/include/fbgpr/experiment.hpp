#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fbgpr/config.hpp"

namespace fbgpr {

struct RunResult {
  std::string out_dir;
  std::string scheme;
  double rmse = 0.0;
  double rmse_se = 0.0;
  double nlpd = 0.0;
  int components = 0;  // mixture components that survived
  std::string summary_text;  // rendered diagnostics table; empty for ml2
  std::string notes;         // warnings worth surfacing (rejected rows, dropped draws)
};

// Full pipeline: load, split, optionally standardize, run the configured
// inference scheme, build the predictive mixture, score, and persist
// artifacts (config echo, trace CSV + metadata JSON, predictions CSV,
// metrics JSON, diagnostics CSV for sampling schemes) under run.out.  The
// output directory is protected by a lockfile for the duration of the run;
// on failure a FAILURE marker with the error text is left next to whatever
// artifacts were already written, and the exception propagates.
RunResult run_experiment(const ExperimentConfig& config);

struct ComparisonRow {
  std::string scheme;
  double rmse = 0.0;
  double rmse_se = 0.0;
  double nlpd = 0.0;
  std::uint64_t seed = 0;
  std::string bundle;
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  std::string csv;
  std::string text;  // aligned table for stdout
};

// Side-by-side metrics for runs that share a dataset and split spec (run
// seeds may differ and are recorded).  A bundle is a run output directory.
Comparison compare_schemes(const std::vector<std::string>& bundle_dirs);

// Long-format CSV (x, observed, mean, lower95, upper95, scheme) over every
// run found in `bundle_dir` (either one run directory or a directory of run
// directories).  Only defined for 1-d inputs.
std::string plot_data_csv(const std::string& bundle_dir);

}  // namespace fbgpr
