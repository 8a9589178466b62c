#include "fbgpr/gp.hpp"

#include <cmath>
#include <limits>

#include "fbgpr/rng.hpp"

namespace fbgpr {

Eigen::VectorXd CholeskyFactor::solve(const Eigen::VectorXd& b) const {
  Eigen::VectorXd x = L.triangularView<Eigen::Lower>().solve(b);
  return L.triangularView<Eigen::Lower>().transpose().solve(x);
}

Eigen::MatrixXd CholeskyFactor::solve(const Eigen::MatrixXd& B) const {
  Eigen::MatrixXd X = L.triangularView<Eigen::Lower>().solve(B);
  return L.triangularView<Eigen::Lower>().transpose().solve(X);
}

double CholeskyFactor::half_log_det() const {
  return L.diagonal().array().log().sum();
}

CholeskyFactor cholesky_with_jitter(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) {
    throw std::invalid_argument("cholesky_with_jitter: matrix must be square");
  }
  if (!A.allFinite()) {
    throw NotPositiveDefiniteError("cholesky_with_jitter: matrix has non-finite entries");
  }
  const double scale = A.diagonal().mean();
  const double ladder[] = {0.0, 1e-10, 1e-8, 1e-6, 1e-4};

  Eigen::LLT<Eigen::MatrixXd> llt;
  for (double mult : ladder) {
    const double jitter = mult * scale;
    if (mult == 0.0) {
      llt.compute(A);
    } else {
      Eigen::MatrixXd shifted = A;
      shifted.diagonal().array() += jitter;
      llt.compute(shifted);
    }
    if (llt.info() == Eigen::Success) {
      return CholeskyFactor{llt.matrixL(), jitter};
    }
  }
  throw NotPositiveDefiniteError(
      "cholesky_with_jitter: not positive definite after jitter up to 1e-4 * mean diagonal (" +
      std::to_string(1e-4 * scale) + ")");
}

GpWorkspace::GpWorkspace(KernelExpr expr, Eigen::MatrixXd X, Eigen::VectorXd y)
    : expr_(std::move(expr)), X_(std::move(X)), y_(std::move(y)), ev_(expr_, X_) {
  if (X_.rows() != y_.size()) {
    throw std::invalid_argument("gp: X and y row counts differ");
  }
  if (y_.size() == 0) throw std::invalid_argument("gp: empty training set");
  noise_leaves_ = expr_.top_level_noise_leaves();
  ev_.exclude_leaves(noise_leaves_);
  for (int leaf : noise_leaves_) {
    const auto& l = expr_.leaves()[leaf];
    if (l.n_slots == 1) noise_slots_.push_back(l.first_slot);
  }
}

double GpWorkspace::noise_variance(const ThetaVector& theta) const {
  double v = 0.0;
  for (int slot : noise_slots_) {
    const double sd = theta.theta(slot);
    v += sd * sd;
  }
  return v;
}

CholeskyFactor GpWorkspace::factor(const ThetaVector& theta) const {
  Eigen::MatrixXd A = ev_.eval(theta);
  A.diagonal().array() += noise_variance(theta);
  if (!A.allFinite()) {
    throw NotPositiveDefiniteError("gp: covariance has non-finite entries");
  }
  return cholesky_with_jitter(A);
}

double GpWorkspace::log_marginal(const ThetaVector& theta) const {
  if (theta.size() != expr_.slot_count()) {
    throw std::invalid_argument("gp: hyperparameter count mismatch");
  }
  const int n = n_train();
  const CholeskyFactor chol = factor(theta);
  const Eigen::VectorXd alpha = chol.solve(y_);
  return -0.5 * y_.dot(alpha) - chol.half_log_det() - 0.5 * n * std::log(2.0 * M_PI);
}

GpWorkspace::Eval GpWorkspace::log_marginal_with_grad(const ThetaVector& theta) const {
  if (theta.size() != expr_.slot_count()) {
    throw std::invalid_argument("gp: hyperparameter count mismatch");
  }
  const int n = n_train();
  const CholeskyFactor chol = factor(theta);
  const Eigen::VectorXd alpha = chol.solve(y_);

  Eval out;
  out.lml = -0.5 * y_.dot(alpha) - chol.half_log_det() - 0.5 * n * std::log(2.0 * M_PI);
  out.grad = Eigen::VectorXd::Zero(theta.size());

  // d lml / d eta_j = 0.5 (alpha' G alpha - tr(K^-1 G)) with G = dK/d eta_j.
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd Kinv = chol.solve(identity);
  ev_.for_each_grad(theta, [&](int slot, const Eigen::MatrixXd& G) {
    out.grad[slot] += 0.5 * (alpha.dot(G * alpha) - Kinv.cwiseProduct(G).sum());
  });
  // Top-level noise slots have dA/d eta = 2 sigma^2 I; no matrix needed.
  const double quad = alpha.squaredNorm();
  const double trace = Kinv.trace();
  for (int slot : noise_slots_) {
    const double v = theta.theta(slot) * theta.theta(slot);
    out.grad[slot] += v * (quad - trace);
  }
  return out;
}

GPPosteriorGaussian GpWorkspace::predict(const ThetaVector& theta,
                                         const Eigen::MatrixXd& Xstar, bool full_cov) const {
  if (Xstar.cols() != X_.cols()) {
    throw std::invalid_argument("gp predict: test input column mismatch");
  }
  const int m = static_cast<int>(Xstar.rows());
  const CholeskyFactor chol = factor(theta);
  const Eigen::VectorXd alpha = chol.solve(y_);

  // Noise leaves evaluate to zero across train/test pairs, so the cross
  // covariance needs no exclusion.
  KernelEvaluator cross(expr_, Xstar, X_);
  const Eigen::MatrixXd Ks = cross.eval(theta);

  GPPosteriorGaussian post;
  post.mean = Ks * alpha;
  post.noise_variance = noise_variance(theta);

  const Eigen::MatrixXd W = chol.L.triangularView<Eigen::Lower>().solve(Ks.transpose());
  if (full_cov) {
    KernelEvaluator self(expr_, Xstar);
    self.exclude_leaves(noise_leaves_);
    Eigen::MatrixXd cov = self.eval(theta);
    cov.selfadjointView<Eigen::Lower>().rankUpdate(W.transpose(), -1.0);
    cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
    for (int i = 0; i < m; ++i) cov(i, i) = std::max(cov(i, i), 0.0);
    post.cov = std::move(cov);
    post.var = post.cov.diagonal();
  } else {
    const Eigen::VectorXd kss = eval_kernel_diag(expr_, theta, m, noise_leaves_);
    post.var.resize(m);
    for (int i = 0; i < m; ++i) {
      post.var[i] = std::max(kss[i] - W.col(i).squaredNorm(), 0.0);
    }
  }
  return post;
}

double log_marginal_likelihood(const KernelExpr& expr, const ThetaVector& theta,
                               const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return GpWorkspace(expr, X, y).log_marginal(theta);
}

Eigen::VectorXd grad_log_marginal(const KernelExpr& expr, const ThetaVector& theta,
                                  const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return GpWorkspace(expr, X, y).log_marginal_with_grad(theta).grad;
}

GPPosteriorGaussian predictive_posterior(const KernelExpr& expr, const ThetaVector& theta,
                                         const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                         const Eigen::MatrixXd& Xstar, bool full_cov) {
  return GpWorkspace(expr, X, y).predict(theta, Xstar, full_cov);
}

Eigen::VectorXd data_scaled_init(const KernelExpr& expr, const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& y) {
  const int n = static_cast<int>(y.size());
  double y_sd = 1.0;
  if (n > 1) {
    const double mean = y.mean();
    y_sd = std::sqrt((y.array() - mean).square().sum() / (n - 1));
  }
  if (!(y_sd > 0.0) || !std::isfinite(y_sd)) y_sd = 1.0;

  const int dim = static_cast<int>(X.cols());
  Eigen::VectorXd span(dim);
  for (int d = 0; d < dim; ++d) {
    span[d] = X.col(d).maxCoeff() - X.col(d).minCoeff();
    if (!(span[d] > 0.0) || !std::isfinite(span[d])) span[d] = 1.0;
  }
  const double mean_span = span.mean();

  // Map slots back to their leaves so lengthscales can use the leaf's axis.
  const auto& leaves = expr.leaves();
  std::vector<int> slot_leaf(expr.slot_count(), -1);
  for (size_t li = 0; li < leaves.size(); ++li) {
    for (int s = leaves[li].first_slot; s < leaves[li].first_slot + leaves[li].n_slots; ++s) {
      slot_leaf[s] = static_cast<int>(li);
    }
  }

  Eigen::VectorXd eta(expr.slot_count());
  const auto& roles = expr.slot_roles();
  for (int s = 0; s < expr.slot_count(); ++s) {
    const KernelLeaf& leaf = leaves[slot_leaf[s]];
    const double axis_span = leaf.active_dim >= 0 ? span[leaf.active_dim] : mean_span;
    switch (roles[s]) {
      case SlotRole::Amplitude:
        eta[s] = std::log(y_sd);
        break;
      case SlotRole::Noise:
        eta[s] = std::log(y_sd / 10.0);
        break;
      case SlotRole::Lengthscale: {
        double sp = axis_span;
        if (leaf.kind == LeafKind::ARD) {
          const int d = s - leaf.first_slot - (leaf.fixed_amplitude ? 0 : 1);
          sp = span[d];
        }
        eta[s] = std::log(sp / 4.0);
        break;
      }
      case SlotRole::Shape:
        eta[s] = 0.0;
        break;
      case SlotRole::Period:
        eta[s] = std::log(axis_span / 10.0);
        break;
    }
  }
  return eta;
}

namespace detail {

// Compact L-BFGS with strong Wolfe line search, written for smooth
// objectives that may evaluate to +inf in infeasible regions (failed
// factorizations): the line search treats those points as overshoots.
struct LbfgsReport {
  Eigen::VectorXd x;
  double f = 0.0;
  int iters = 0;
  bool converged = false;
  std::string note;
};

template <typename F>
LbfgsReport lbfgs_minimize(const F& fn, Eigen::VectorXd x0, int max_iters, double grad_tol) {
  constexpr int kHistory = 8;
  constexpr double c1 = 1e-4, c2 = 0.9;
  const double inf = std::numeric_limits<double>::infinity();

  LbfgsReport rep;
  const int dim = static_cast<int>(x0.size());
  Eigen::VectorXd x = std::move(x0), g(dim);
  double f = fn(x, g);
  if (!std::isfinite(f)) {
    rep.x = x;
    rep.f = inf;
    rep.note = "objective not finite at start";
    return rep;
  }

  std::vector<Eigen::VectorXd> s_hist, y_hist;
  std::vector<double> rho_hist;

  for (int iter = 0; iter < max_iters; ++iter) {
    if (g.lpNorm<Eigen::Infinity>() < grad_tol) {
      rep.converged = true;
      break;
    }
    // Two-loop recursion for the search direction.
    Eigen::VectorXd q = g;
    const int h = static_cast<int>(s_hist.size());
    std::vector<double> a(h);
    for (int i = h - 1; i >= 0; --i) {
      a[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= a[i] * y_hist[i];
    }
    if (h > 0) {
      const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (int i = 0; i < h; ++i) {
      const double b = rho_hist[i] * y_hist[i].dot(q);
      q += (a[i] - b) * s_hist[i];
    }
    Eigen::VectorXd d = -q;
    double dg = d.dot(g);
    if (!(dg < 0.0)) {  // not a descent direction; reset to steepest descent
      d = -g;
      dg = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    // Strong Wolfe line search: bracket then bisect.  Tracks the best
    // Armijo-satisfying point so an exhausted search can still step.
    const double f0 = f, dg0 = dg;
    double t = 1.0, t_lo = 0.0, t_hi = inf;
    double f_lo = f0;
    Eigen::VectorXd x_new, g_new(dim), x_best, g_best;
    double f_new = inf, f_best = inf;
    bool ok = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + t * d;
      f_new = fn(x_new, g_new);
      if (!std::isfinite(f_new) || f_new > f0 + c1 * t * dg0 || (ls > 0 && f_new >= f_lo)) {
        t_hi = t;
      } else {
        if (f_new < f_best) {
          f_best = f_new;
          x_best = x_new;
          g_best = g_new;
        }
        const double dg_new = d.dot(g_new);
        if (std::abs(dg_new) <= -c2 * dg0) {
          ok = true;
          break;
        }
        if (dg_new >= 0.0) {
          t_hi = t;  // walked past the minimum along d
        } else {
          t_lo = t;  // Armijo holds but the slope is still steep; go further
          f_lo = f_new;
        }
      }
      t = std::isfinite(t_hi) ? 0.5 * (t_lo + t_hi) : 2.0 * t;
      if (t < 1e-16) break;
    }
    if (!ok) {
      if (std::isfinite(f_best) && f_best < f0) {
        x_new = std::move(x_best);
        f_new = f_best;
        g_new = std::move(g_best);
      } else {
        rep.note = "line search failed";
        break;
      }
    }

    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > kHistory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }
    x = std::move(x_new);
    f = f_new;
    g = g_new;
    rep.iters = iter + 1;
  }

  rep.x = x;
  rep.f = f;
  return rep;
}

}  // namespace detail

Ml2Result ml2_optimize(const GpWorkspace& gp, const Ml2Options& options) {
  if (options.restarts < 1) throw std::invalid_argument("ml2: need at least one restart");
  const int dim = gp.slot_count();
  const Eigen::VectorXd base = data_scaled_init(gp.expr(), gp.X(), gp.y());

  // Negated objective; factorization failures surface as +inf so the line
  // search backs away from infeasible regions.
  auto objective = [&](const Eigen::VectorXd& eta, Eigen::VectorXd& grad) -> double {
    try {
      const auto ev = gp.log_marginal_with_grad(ThetaVector(eta));
      grad = -ev.grad;
      return -ev.lml;
    } catch (const NotPositiveDefiniteError&) {
      grad = Eigen::VectorXd::Zero(eta.size());
      return std::numeric_limits<double>::infinity();
    }
  };

  Ml2Result result;
  result.lml = -std::numeric_limits<double>::infinity();
  result.best_restart = -1;

  for (int r = 0; r < options.restarts; ++r) {
    Eigen::VectorXd init = base;
    if (r > 0) {
      // Alternate between exploring around the data-scaled start and around
      // the unit scale; data far from unit scale needs the former, while the
      // latter hedges against a misleading data-scaled guess.
      Rng rng = Rng::substream(options.seed, static_cast<std::uint64_t>(r));
      const bool around_base = (r % 2) == 1;
      for (int j = 0; j < dim; ++j) {
        init[j] = (around_base ? base[j] : 0.0) + rng.normal(0.0, options.init_std);
      }
    }
    const auto rep = detail::lbfgs_minimize(objective, init, options.max_iters, options.grad_tol);

    Ml2Restart meta;
    meta.index = r;
    meta.iters = rep.iters;
    meta.converged = rep.converged;
    meta.usable = std::isfinite(rep.f);
    meta.lml = -rep.f;
    meta.note = rep.note;
    result.restarts.push_back(meta);

    if (meta.usable && meta.lml > result.lml) {
      result.lml = meta.lml;
      result.theta = ThetaVector(rep.x);
      result.best_restart = r;
    }
  }

  if (result.best_restart < 0) {
    std::string detail = "ml2: every restart failed;";
    for (const auto& r : result.restarts) {
      detail += " [" + std::to_string(r.index) + ": " + (r.note.empty() ? "no finite optimum" : r.note) + "]";
    }
    throw std::runtime_error(detail);
  }
  return result;
}

}  // namespace fbgpr
