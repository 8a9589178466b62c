#pragma once

#include <limits>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "fbgpr/gp.hpp"
#include "fbgpr/kernel.hpp"

namespace fbgpr {

// Prior for one hyperparameter slot.  NormalInLogSpace is a density on
// eta = log(theta) directly, so it carries no Jacobian term.  The
// *OnConstrained kinds are densities on theta itself and are scored with
// the change-of-variables Jacobian (+eta) when evaluated in eta.
struct SlotPrior {
  enum class Kind { NormalInLogSpace, GammaOnConstrained, NormalOnConstrained };
  Kind kind = Kind::NormalInLogSpace;
  double a = 0.0;  // mean for normals, shape for gamma
  double b = 3.0;  // standard deviation for normals, rate for gamma

  static SlotPrior normal_log(double mean, double sd) {
    return {Kind::NormalInLogSpace, mean, sd};
  }
  static SlotPrior gamma(double shape, double rate) {
    return {Kind::GammaOnConstrained, shape, rate};
  }
  static SlotPrior normal(double mean, double sd) {
    return {Kind::NormalOnConstrained, mean, sd};
  }
};

class PriorSpec {
 public:
  PriorSpec() = default;
  explicit PriorSpec(std::vector<SlotPrior> slots) : slots_(std::move(slots)) {}

  // Independent N(0, sd^2) in log space on every slot.
  static PriorSpec vague(int n_slots, double sd = 3.0);

  void set(int slot, SlotPrior prior) { slots_.at(slot) = prior; }
  const SlotPrior& slot(int i) const { return slots_.at(i); }
  int size() const { return static_cast<int>(slots_.size()); }

  double log_density(const Eigen::VectorXd& eta) const;
  Eigen::VectorXd grad(const Eigen::VectorXd& eta) const;

 private:
  std::vector<SlotPrior> slots_;
};

double log_prior(const PriorSpec& prior, const ThetaVector& theta);
Eigen::VectorXd grad_log_prior(const PriorSpec& prior, const ThetaVector& theta);

struct TargetEval {
  double value = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad;
  bool ok = false;  // false marks an infeasible point, value is -inf
};

// Differentiable unnormalized log density over an unconstrained vector.
// Implementations must report infeasible points (overflow, factorization
// failure) through TargetEval::ok instead of throwing, so samplers can
// treat them as rejections.  Evaluation is const and must be safe to call
// from several threads at once.
class LogDensityTarget {
 public:
  virtual ~LogDensityTarget() = default;
  virtual int dim() const = 0;
  virtual double value(const Eigen::VectorXd& x) const = 0;
  virtual TargetEval value_and_grad(const Eigen::VectorXd& x) const = 0;
};

// log p(y | eta) + log p(eta): the sampling target for the fully Bayesian
// treatment.
class GpLogJointTarget final : public LogDensityTarget {
 public:
  GpLogJointTarget(KernelExpr expr, Eigen::MatrixXd X, Eigen::VectorXd y, PriorSpec prior);

  int dim() const override { return gp_.slot_count(); }
  double value(const Eigen::VectorXd& eta) const override;
  TargetEval value_and_grad(const Eigen::VectorXd& eta) const override;

  const GpWorkspace& gp() const { return gp_; }
  const PriorSpec& prior() const { return prior_; }

 private:
  GpWorkspace gp_;
  PriorSpec prior_;
};

}  // namespace fbgpr
