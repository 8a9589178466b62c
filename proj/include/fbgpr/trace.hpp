#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fbgpr {

// Post-warmup draws of one chain plus per-draw bookkeeping.  VI and ML-II
// exports reuse the same shape with the sampler-specific fields zeroed.
struct ChainResult {
  Eigen::MatrixXd draws;  // samples x slots, unconstrained eta
  Eigen::VectorXd lp;     // log target density per draw
  std::vector<std::uint8_t> divergent;
  std::vector<int> tree_depth;
  double step_size = 0.0;
  double mean_accept = 0.0;
  int divergence_count = 0;
  bool healthy = true;
  double mean_lp() const { return lp.size() ? lp.mean() : 0.0; }
};

// CSV with columns: chain, draw, <slot names...>, lp, divergent, tree_depth.
// eta values are written with round-trip precision so traces can be fed back
// into prediction without loss.
std::string trace_csv(const std::vector<std::string>& slot_names,
                      const std::vector<ChainResult>& chains);

struct ParsedTrace {
  std::vector<std::string> slot_names;
  std::vector<ChainResult> chains;
};

// Inverse of trace_csv; accepts any trace produced by this project.
ParsedTrace parse_trace_csv(const std::string& text);

}  // namespace fbgpr
