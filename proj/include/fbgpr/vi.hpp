#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fbgpr/model.hpp"

namespace fbgpr {

enum class ViFamily { MeanField, FullRank };

std::string vi_family_name(ViFamily family);

// Fully factorized Gaussian in eta space; nu_j = log sigma_j^2 keeps the
// scale coordinates unconstrained.
struct MeanFieldParams {
  Eigen::VectorXd mu;
  Eigen::VectorXd nu;

  Eigen::VectorXd sigma() const { return (0.5 * nu.array()).exp(); }
};

// Dense Gaussian via a lower-triangular Cholesky factor with positive
// diagonal; optimization works on log-diagonal coordinates.
struct FullRankParams {
  Eigen::VectorXd mu;
  Eigen::MatrixXd L;

  Eigen::MatrixXd covariance() const { return L * L.transpose(); }
};

// Tagged pair of the two families so fitting, sampling, and serialization
// share one code path.  Only the member matching `family` is meaningful.
struct VariationalParams {
  ViFamily family = ViFamily::MeanField;
  MeanFieldParams mf;
  FullRankParams fr;

  static VariationalParams mean_field_init(int dim);  // mu = 0, sigma = 1
  static VariationalParams full_rank_init(int dim);   // mu = 0, L = I

  int latent_dim() const;
  // Count of unconstrained optimization coordinates: 2J or J + J(J+1)/2.
  int param_dim() const;
  double entropy() const;
  // eta = mu + sigma .* z or mu + L z.
  Eigen::VectorXd transform(const Eigen::VectorXd& z) const;
};

// Flat unconstrained coordinates: mean-field [mu, nu]; full-rank
// [mu, log diag L, strict lower triangle column-major].
Eigen::VectorXd pack_params(const VariationalParams& params);
VariationalParams unpack_params(ViFamily family, int dim, const Eigen::VectorXd& flat);

struct ViConfig {
  ViFamily family = ViFamily::MeanField;
  int mc_samples = 8;       // M per gradient estimate
  double rate = 0.0;        // base step rate; 0 selects from {0.01, 0.05, 0.1}
  int max_iters = 10000;
  double threshold = 1e-4;  // parameter-drift convergence threshold
  int check_every = 10;
  int elbo_samples = 200;   // monitor sample count (rate probes, final ELBO)
  int probe_iters = 50;
  std::uint64_t seed = 0;
  int threads = 0;
};

// Monte Carlo ELBO: mean target value over reparameterized draws plus the
// closed-form Gaussian entropy.  Draws whose target is infeasible are
// excluded from the mean and counted in `flagged`; the estimate is -inf
// only when every draw is flagged.
struct ElboEstimate {
  double value = 0.0;
  int flagged = 0;
};
ElboEstimate elbo_estimate(const LogDensityTarget& target, const VariationalParams& params,
                           int n_samples, std::uint64_t seed);

// Pathwise gradient in packed coordinates, using the same draws as
// elbo_estimate under the same seed (common random numbers).  Also returns
// the matching ELBO value since it falls out for free.
struct ElboGradient {
  Eigen::VectorXd grad;
  double elbo = 0.0;
  int flagged = 0;
};
ElboGradient elbo_grad_estimate(const LogDensityTarget& target, const VariationalParams& params,
                                int mc_samples, std::uint64_t seed);

struct ViFit {
  VariationalParams params;
  std::vector<double> elbo_trajectory;  // per-iteration MC ELBO from the gradient estimator
  int iterations = 0;
  bool converged = false;
  double rate = 0.0;  // rate actually used (after grid selection)
  double final_elbo = 0.0;
  int final_elbo_flagged = 0;
  double elapsed_seconds = 0.0;
};

// Stochastic gradient ascent on the ELBO with per-coordinate adaptive step
// sizes.  Stops when the smoothed parameter vector drifts less than
// `threshold` per iteration across a check window, or at max_iters.
// Aborts (std::runtime_error) after 50 consecutive fully flagged
// iterations.  Deterministic given the seed.
ViFit fit_vi(const LogDensityTarget& target, const ViConfig& config);

// count x J matrix of eta draws from q.
Eigen::MatrixXd draw_vi_samples(const VariationalParams& params, int count, std::uint64_t seed);

}  // namespace fbgpr
