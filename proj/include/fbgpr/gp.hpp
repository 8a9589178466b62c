#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fbgpr/kernel.hpp"

namespace fbgpr {

// Raised when a covariance matrix cannot be factored (indefinite after the
// whole jitter ladder, or non-finite entries from extreme hyperparameters).
struct NotPositiveDefiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CholeskyFactor {
  Eigen::MatrixXd L;    // lower triangular
  double jitter = 0.0;  // value added to the diagonal before factoring

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;
  double half_log_det() const;  // sum_i log L_ii
};

// Factors A + jitter*I, escalating jitter through {0, 1e-10, 1e-8, 1e-6,
// 1e-4} times the mean diagonal until the factorization succeeds.  Throws
// NotPositiveDefiniteError once the ladder is exhausted.
CholeskyFactor cholesky_with_jitter(const Eigen::MatrixXd& A);

// Gaussian posterior over latent function values at test inputs.  `var` is
// always filled; `cov` only when a full covariance was requested.  The
// observation noise variance of the conditioning model is carried along so
// downstream scoring can add it back.
struct GPPosteriorGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
  Eigen::MatrixXd cov;
  double noise_variance = 0.0;
};

// Shared machinery for repeated evaluations against one dataset: caches the
// kernel evaluator (distance matrices) and splits top-level Noise summands
// out of the latent covariance so they act as observation noise.
class GpWorkspace {
 public:
  GpWorkspace(KernelExpr expr, Eigen::MatrixXd X, Eigen::VectorXd y);

  int slot_count() const { return expr_.slot_count(); }
  int n_train() const { return static_cast<int>(y_.size()); }
  const KernelExpr& expr() const { return expr_; }
  const Eigen::MatrixXd& X() const { return X_; }
  const Eigen::VectorXd& y() const { return y_; }

  double noise_variance(const ThetaVector& theta) const;

  double log_marginal(const ThetaVector& theta) const;

  struct Eval {
    double lml = 0.0;
    Eigen::VectorXd grad;
  };
  Eval log_marginal_with_grad(const ThetaVector& theta) const;

  GPPosteriorGaussian predict(const ThetaVector& theta, const Eigen::MatrixXd& Xstar,
                              bool full_cov) const;

 private:
  CholeskyFactor factor(const ThetaVector& theta) const;

  KernelExpr expr_;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  KernelEvaluator ev_;
  std::vector<int> noise_leaves_;
  std::vector<int> noise_slots_;
};

double log_marginal_likelihood(const KernelExpr& expr, const ThetaVector& theta,
                               const Eigen::MatrixXd& X, const Eigen::VectorXd& y);
Eigen::VectorXd grad_log_marginal(const KernelExpr& expr, const ThetaVector& theta,
                                  const Eigen::MatrixXd& X, const Eigen::VectorXd& y);
GPPosteriorGaussian predictive_posterior(const KernelExpr& expr, const ThetaVector& theta,
                                         const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                         const Eigen::MatrixXd& Xstar, bool full_cov = true);

// Starting point for optimizers and samplers scaled to the data: amplitude
// and noise slots from the spread of y, lengthscales from the input span.
// Keeps the first likelihood evaluations in floating-point range when the
// targets are far from unit scale.
Eigen::VectorXd data_scaled_init(const KernelExpr& expr, const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& y);

struct Ml2Options {
  int restarts = 5;
  int max_iters = 1000;
  double grad_tol = 1e-6;
  double init_std = 3.0;  // log-space spread of random restarts
  std::uint64_t seed = 0;
};

struct Ml2Restart {
  int index = 0;
  bool usable = false;     // produced a finite optimum
  bool converged = false;  // hit the gradient tolerance
  double lml = 0.0;
  int iters = 0;
  std::string note;
};

struct Ml2Result {
  ThetaVector theta;
  double lml = 0.0;
  int best_restart = 0;
  std::vector<Ml2Restart> restarts;
};

// Type-II maximum likelihood: maximizes the log marginal over eta by L-BFGS
// from a data-scaled start plus randomized restarts.  Ties on the optimum
// value resolve to the lowest restart index.  Throws if every restart fails.
Ml2Result ml2_optimize(const GpWorkspace& gp, const Ml2Options& options);

}  // namespace fbgpr
