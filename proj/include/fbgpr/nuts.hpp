#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fbgpr/model.hpp"
#include "fbgpr/trace.hpp"

namespace fbgpr {

struct NutsConfig {
  int chains = 4;
  int warmup = 500;
  int samples = 1000;
  double target_accept = 0.8;
  int max_depth = 10;
  std::uint64_t seed = 0;
  // Chains start at init (zeros when empty) plus per-coordinate
  // uniform(-init_jitter, init_jitter) noise.
  Eigen::VectorXd init;
  double init_jitter = 1.0;
  int threads = 0;  // 0 = hardware concurrency
};

struct SamplerRun {
  std::vector<std::string> slot_names;
  std::vector<ChainResult> chains;
  int warmup = 0;
  double target_accept = 0.8;
  std::uint64_t seed = 0;
  double elapsed_seconds = 0.0;

  // Per-chain draw matrices, for the diagnostics layer.
  std::vector<Eigen::MatrixXd> draw_matrices() const;
};

// Single leapfrog step of Hamiltonian dynamics with identity mass, returning
// the new position and momentum.  A non-finite gradient surfaces through the
// returned ok flag rather than an exception.
struct LeapfrogResult {
  Eigen::VectorXd position;
  Eigen::VectorXd momentum;
  double logp = 0.0;
  bool ok = false;
};
LeapfrogResult leapfrog(const LogDensityTarget& target, const Eigen::VectorXd& position,
                        const Eigen::VectorXd& momentum, double step);

// No-U-Turn sampling with multinomial state selection, the generalized
// U-turn criterion, and dual-averaging step-size adaptation during warmup.
// Chains run concurrently on private RNG substreams; the result is a
// deterministic function of (target, config).
SamplerRun sample_nuts(const LogDensityTarget& target, const NutsConfig& config,
                       const std::vector<std::string>& slot_names);

struct ChainSelection {
  int index = 0;
  std::string rationale;
};

// The healthy chain (at most 25% divergent draws) with the highest mean log
// density; ties resolve to the lowest index.  Throws std::runtime_error when
// every chain is unhealthy.
ChainSelection select_prediction_chain(const SamplerRun& run);

}  // namespace fbgpr
