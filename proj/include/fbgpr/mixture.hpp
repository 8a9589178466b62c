#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "fbgpr/kernel.hpp"

namespace fbgpr {

// Equal-weight Gaussian mixture over test points, one component per
// posterior draw.  Per-point variances are always stored; full covariance
// blocks only when requested at build time.
struct PredictiveMixture {
  Eigen::MatrixXd means;  // M x N*
  Eigen::MatrixXd vars;   // M x N*
  std::vector<Eigen::MatrixXd> covs;
  std::vector<int> dropped;  // rows of the input draw matrix that failed to factor

  int components() const { return static_cast<int>(means.rows()); }
  int points() const { return static_cast<int>(means.cols()); }
};

struct MixtureBuild {
  PredictiveMixture mixture;
  Eigen::VectorXd noise_vars;  // observation-noise variance per surviving component
};

// One predictive posterior per draw row (eta scale).  Components whose
// kernel matrix cannot be factored are dropped with their row recorded;
// throws only if every component fails.
MixtureBuild build_mixture(const KernelExpr& expr, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& y, const Eigen::MatrixXd& Xstar,
                           const Eigen::MatrixXd& eta_draws, bool full_cov = false);

struct MixtureMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;  // within-component average plus between-component spread
};
MixtureMoments mixture_moments(const PredictiveMixture& mix);

// Per-point Monte Carlo order statistics: draw T mixture samples (component
// uniform, then Gaussian), sort, take the 1-based ceil(pct/100 * T) ranks.
// Deterministic: test point i uses its own substream of `seed`.
struct QuantileBand {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};
QuantileBand empirical_quantiles(const PredictiveMixture& mix, int t_samples,
                                 double lower_pct = 2.5, double upper_pct = 97.5,
                                 std::uint64_t seed = 0);

struct RmseResult {
  double value = 0.0;
  double se = 0.0;  // delta method: sd(squared errors) / (2 rmse sqrt(N*))
};
RmseResult rmse_metric(const Eigen::VectorXd& predicted_mean, const Eigen::VectorXd& actual);

// Mean negative log mixture density of the observed targets, each component
// widened by its own observation-noise variance.  Pass zeros to score the
// noise-free function values instead.
double nlpd_metric(const PredictiveMixture& mix, const Eigen::VectorXd& actual,
                   const Eigen::VectorXd& noise_vars);

// `count` evenly spaced rows spanning first..last; all rows when the matrix
// is already small enough.
Eigen::MatrixXd equal_stride_thin(const Eigen::MatrixXd& draws, int count);

}  // namespace fbgpr
