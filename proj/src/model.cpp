#include "fbgpr/model.hpp"

#include <cmath>
#include <stdexcept>

namespace fbgpr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double slot_log_density(const SlotPrior& p, double eta) {
  switch (p.kind) {
    case SlotPrior::Kind::NormalInLogSpace: {
      const double z = (eta - p.a) / p.b;
      return -0.5 * z * z - std::log(p.b) - 0.5 * std::log(2.0 * M_PI);
    }
    case SlotPrior::Kind::GammaOnConstrained: {
      // Gamma(shape a, rate b) on theta plus the exp-transform Jacobian:
      // a log b - lgamma(a) + a*eta - b*exp(eta).
      return p.a * std::log(p.b) - std::lgamma(p.a) + p.a * eta - p.b * std::exp(eta);
    }
    case SlotPrior::Kind::NormalOnConstrained: {
      const double theta = std::exp(eta);
      const double z = (theta - p.a) / p.b;
      return -0.5 * z * z - std::log(p.b) - 0.5 * std::log(2.0 * M_PI) + eta;
    }
  }
  return kNegInf;
}

double slot_grad(const SlotPrior& p, double eta) {
  switch (p.kind) {
    case SlotPrior::Kind::NormalInLogSpace:
      return -(eta - p.a) / (p.b * p.b);
    case SlotPrior::Kind::GammaOnConstrained:
      return p.a - p.b * std::exp(eta);
    case SlotPrior::Kind::NormalOnConstrained: {
      const double theta = std::exp(eta);
      return -(theta - p.a) / (p.b * p.b) * theta + 1.0;
    }
  }
  return 0.0;
}

}  // namespace

PriorSpec PriorSpec::vague(int n_slots, double sd) {
  std::vector<SlotPrior> slots(n_slots, SlotPrior::normal_log(0.0, sd));
  return PriorSpec(std::move(slots));
}

double PriorSpec::log_density(const Eigen::VectorXd& eta) const {
  if (eta.size() != size()) throw std::invalid_argument("prior: slot count mismatch");
  double sum = 0.0;
  for (int i = 0; i < size(); ++i) sum += slot_log_density(slots_[i], eta[i]);
  return sum;
}

Eigen::VectorXd PriorSpec::grad(const Eigen::VectorXd& eta) const {
  if (eta.size() != size()) throw std::invalid_argument("prior: slot count mismatch");
  Eigen::VectorXd g(size());
  for (int i = 0; i < size(); ++i) g[i] = slot_grad(slots_[i], eta[i]);
  return g;
}

double log_prior(const PriorSpec& prior, const ThetaVector& theta) {
  return prior.log_density(theta.eta());
}

Eigen::VectorXd grad_log_prior(const PriorSpec& prior, const ThetaVector& theta) {
  return prior.grad(theta.eta());
}

GpLogJointTarget::GpLogJointTarget(KernelExpr expr, Eigen::MatrixXd X, Eigen::VectorXd y,
                                   PriorSpec prior)
    : gp_(std::move(expr), std::move(X), std::move(y)), prior_(std::move(prior)) {
  if (prior_.size() != gp_.slot_count()) {
    throw std::invalid_argument("model: prior has " + std::to_string(prior_.size()) +
                                " slots, kernel expression has " +
                                std::to_string(gp_.slot_count()));
  }
}

double GpLogJointTarget::value(const Eigen::VectorXd& eta) const {
  if (!eta.allFinite()) return kNegInf;
  try {
    const double v = gp_.log_marginal(ThetaVector(eta)) + prior_.log_density(eta);
    return std::isfinite(v) ? v : kNegInf;
  } catch (const NotPositiveDefiniteError&) {
    return kNegInf;
  }
}

TargetEval GpLogJointTarget::value_and_grad(const Eigen::VectorXd& eta) const {
  TargetEval out;
  out.grad = Eigen::VectorXd::Zero(dim());
  if (!eta.allFinite()) return out;
  try {
    const auto ev = gp_.log_marginal_with_grad(ThetaVector(eta));
    out.value = ev.lml + prior_.log_density(eta);
    out.grad = ev.grad + prior_.grad(eta);
    out.ok = std::isfinite(out.value) && out.grad.allFinite();
    if (!out.ok) {
      out.value = kNegInf;
      out.grad.setZero();
    }
  } catch (const NotPositiveDefiniteError&) {
    out.value = kNegInf;
    out.grad.setZero();
    out.ok = false;
  }
  return out;
}

}  // namespace fbgpr
