#include "fbgpr/vi.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "fbgpr/parallel.hpp"
#include "fbgpr/rng.hpp"

namespace fbgpr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Two-moment smoothing constants for the adaptive step rule.
constexpr double kGradMemory = 0.9;
constexpr int kMaxBadIters = 50;

int lower_triangle_size(int dim) { return dim * (dim + 1) / 2; }

}  // namespace

std::string vi_family_name(ViFamily family) {
  return family == ViFamily::MeanField ? "meanfield" : "fullrank";
}

VariationalParams VariationalParams::mean_field_init(int dim) {
  if (dim < 1) throw std::invalid_argument("variational family needs dim >= 1");
  VariationalParams p;
  p.family = ViFamily::MeanField;
  p.mf.mu = Eigen::VectorXd::Zero(dim);
  p.mf.nu = Eigen::VectorXd::Zero(dim);
  return p;
}

VariationalParams VariationalParams::full_rank_init(int dim) {
  if (dim < 1) throw std::invalid_argument("variational family needs dim >= 1");
  VariationalParams p;
  p.family = ViFamily::FullRank;
  p.fr.mu = Eigen::VectorXd::Zero(dim);
  p.fr.L = Eigen::MatrixXd::Identity(dim, dim);
  return p;
}

int VariationalParams::latent_dim() const {
  return family == ViFamily::MeanField ? static_cast<int>(mf.mu.size())
                                       : static_cast<int>(fr.mu.size());
}

int VariationalParams::param_dim() const {
  const int j = latent_dim();
  return family == ViFamily::MeanField ? 2 * j : j + lower_triangle_size(j);
}

double VariationalParams::entropy() const {
  const int j = latent_dim();
  const double base = 0.5 * j * (1.0 + std::log(2.0 * M_PI));
  if (family == ViFamily::MeanField) return base + 0.5 * mf.nu.sum();
  return base + fr.L.diagonal().array().log().sum();
}

Eigen::VectorXd VariationalParams::transform(const Eigen::VectorXd& z) const {
  if (z.size() != latent_dim()) throw std::invalid_argument("draw dimension mismatch");
  if (family == ViFamily::MeanField)
    return mf.mu.array() + mf.sigma().array() * z.array();
  return fr.mu + fr.L.triangularView<Eigen::Lower>() * z;
}

Eigen::VectorXd pack_params(const VariationalParams& params) {
  const int j = params.latent_dim();
  Eigen::VectorXd flat(params.param_dim());
  if (params.family == ViFamily::MeanField) {
    flat.head(j) = params.mf.mu;
    flat.tail(j) = params.mf.nu;
    return flat;
  }
  flat.head(j) = params.fr.mu;
  flat.segment(j, j) = params.fr.L.diagonal().array().log();
  int k = 2 * j;
  for (int b = 0; b < j; ++b)
    for (int a = b + 1; a < j; ++a) flat[k++] = params.fr.L(a, b);
  return flat;
}

VariationalParams unpack_params(ViFamily family, int dim, const Eigen::VectorXd& flat) {
  VariationalParams p = family == ViFamily::MeanField ? VariationalParams::mean_field_init(dim)
                                                      : VariationalParams::full_rank_init(dim);
  if (flat.size() != p.param_dim()) throw std::invalid_argument("packed parameter size mismatch");
  if (family == ViFamily::MeanField) {
    p.mf.mu = flat.head(dim);
    p.mf.nu = flat.tail(dim);
    return p;
  }
  p.fr.mu = flat.head(dim);
  p.fr.L = Eigen::MatrixXd::Zero(dim, dim);
  p.fr.L.diagonal() = flat.segment(dim, dim).array().exp();
  int k = 2 * dim;
  for (int b = 0; b < dim; ++b)
    for (int a = b + 1; a < dim; ++a) p.fr.L(a, b) = flat[k++];
  return p;
}

namespace {

struct SampleBatch {
  std::vector<Eigen::VectorXd> z;
  std::vector<TargetEval> evals;
  std::vector<bool> usable;
  int n_usable = 0;
};

// Draws z_1..z_n up front (sequential rng), evaluates the target at the
// transformed points, and marks infeasible or non-finite results.
SampleBatch evaluate_batch(const LogDensityTarget& target, const VariationalParams& params,
                           int n_samples, std::uint64_t seed, bool with_grad) {
  const int j = params.latent_dim();
  SampleBatch batch;
  batch.z.resize(n_samples);
  batch.evals.resize(n_samples);
  batch.usable.assign(n_samples, false);
  Rng rng(seed);
  for (int m = 0; m < n_samples; ++m) batch.z[m] = rng.normal_vector(j);
  parallel_for(n_samples, [&](int m) {
    const Eigen::VectorXd eta = params.transform(batch.z[m]);
    if (with_grad) {
      batch.evals[m] = target.value_and_grad(eta);
    } else {
      TargetEval ev;
      ev.value = target.value(eta);
      ev.ok = std::isfinite(ev.value);
      batch.evals[m] = ev;
    }
  });
  for (int m = 0; m < n_samples; ++m) {
    const TargetEval& ev = batch.evals[m];
    bool ok = ev.ok && std::isfinite(ev.value);
    if (ok && with_grad) ok = ev.grad.allFinite();
    batch.usable[m] = ok;
    if (ok) ++batch.n_usable;
  }
  return batch;
}

}  // namespace

ElboEstimate elbo_estimate(const LogDensityTarget& target, const VariationalParams& params,
                           int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("elbo_estimate needs n_samples >= 1");
  if (target.dim() != params.latent_dim())
    throw std::invalid_argument("target/variational dimension mismatch");
  const SampleBatch batch = evaluate_batch(target, params, n_samples, seed, false);
  ElboEstimate out;
  out.flagged = n_samples - batch.n_usable;
  if (batch.n_usable == 0) {
    out.value = kNegInf;
    return out;
  }
  double sum = 0.0;
  for (int m = 0; m < n_samples; ++m)
    if (batch.usable[m]) sum += batch.evals[m].value;
  out.value = sum / batch.n_usable + params.entropy();
  return out;
}

ElboGradient elbo_grad_estimate(const LogDensityTarget& target, const VariationalParams& params,
                                int mc_samples, std::uint64_t seed) {
  if (mc_samples < 1) throw std::invalid_argument("elbo_grad_estimate needs mc_samples >= 1");
  if (target.dim() != params.latent_dim())
    throw std::invalid_argument("target/variational dimension mismatch");
  const int j = params.latent_dim();
  const SampleBatch batch = evaluate_batch(target, params, mc_samples, seed, true);

  ElboGradient out;
  out.grad = Eigen::VectorXd::Zero(params.param_dim());
  out.flagged = mc_samples - batch.n_usable;
  if (batch.n_usable == 0) {
    out.elbo = kNegInf;
    return out;
  }

  double value_sum = 0.0;
  Eigen::VectorXd grad_mu = Eigen::VectorXd::Zero(j);
  if (params.family == ViFamily::MeanField) {
    const Eigen::VectorXd sigma = params.mf.sigma();
    Eigen::VectorXd grad_nu = Eigen::VectorXd::Zero(j);
    for (int m = 0; m < mc_samples; ++m) {
      if (!batch.usable[m]) continue;
      const Eigen::VectorXd& g = batch.evals[m].grad;
      value_sum += batch.evals[m].value;
      grad_mu += g;
      grad_nu.array() += 0.5 * g.array() * batch.z[m].array() * sigma.array();
    }
    grad_mu /= batch.n_usable;
    grad_nu /= batch.n_usable;
    grad_nu.array() += 0.5;  // entropy derivative in nu coordinates
    out.grad.head(j) = grad_mu;
    out.grad.tail(j) = grad_nu;
  } else {
    Eigen::MatrixXd grad_l = Eigen::MatrixXd::Zero(j, j);
    for (int m = 0; m < mc_samples; ++m) {
      if (!batch.usable[m]) continue;
      const Eigen::VectorXd& g = batch.evals[m].grad;
      value_sum += batch.evals[m].value;
      grad_mu += g;
      grad_l.triangularView<Eigen::Lower>() += g * batch.z[m].transpose();
    }
    grad_mu /= batch.n_usable;
    grad_l /= batch.n_usable;
    out.grad.head(j) = grad_mu;
    // Diagonal in log coordinates picks up a factor L_jj plus the entropy
    // derivative d(sum log L_jj)/d(log L_jj) = 1.
    out.grad.segment(j, j) =
        (grad_l.diagonal().array() * params.fr.L.diagonal().array() + 1.0).matrix();
    int k = 2 * j;
    for (int b = 0; b < j; ++b)
      for (int a = b + 1; a < j; ++a) out.grad[k++] = grad_l(a, b);
  }
  out.elbo = value_sum / batch.n_usable + params.entropy();
  return out;
}

namespace {

struct OptimizeResult {
  Eigen::VectorXd lambda;
  std::vector<double> trajectory;
  int iterations = 0;
  bool converged = false;
};

OptimizeResult optimize_elbo(const LogDensityTarget& target, const ViConfig& config, double rate,
                             int max_iters, bool check_convergence) {
  const int j = target.dim();
  const VariationalParams init = config.family == ViFamily::MeanField
                                     ? VariationalParams::mean_field_init(j)
                                     : VariationalParams::full_rank_init(j);
  OptimizeResult res;
  res.lambda = pack_params(init);
  res.trajectory.reserve(max_iters);

  Eigen::VectorXd grad_sq;
  Eigen::VectorXd ema = res.lambda;
  Eigen::VectorXd snapshot;
  bool have_snapshot = false;
  int consecutive_bad = 0;

  for (int t = 1; t <= max_iters; ++t) {
    const VariationalParams params = unpack_params(config.family, j, res.lambda);
    const ElboGradient g =
        elbo_grad_estimate(target, params, config.mc_samples,
                           Rng::derive(config.seed, static_cast<std::uint64_t>(t)));
    res.trajectory.push_back(g.elbo);
    res.iterations = t;

    if (!std::isfinite(g.elbo)) {
      if (++consecutive_bad >= kMaxBadIters) {
        std::ostringstream msg;
        msg << "variational fit diverged: ELBO not finite for " << kMaxBadIters
            << " consecutive iterations (family " << vi_family_name(config.family) << ", rate "
            << rate << ", stopped at iteration " << t << ")";
        throw std::runtime_error(msg.str());
      }
    } else {
      consecutive_bad = 0;
    }

    const Eigen::ArrayXd g2 = g.grad.array().square();
    if (grad_sq.size() == 0)
      grad_sq = g2.matrix();
    else
      grad_sq = (kGradMemory * grad_sq.array() + (1.0 - kGradMemory) * g2).matrix();
    const Eigen::ArrayXd step = rate * std::pow(static_cast<double>(t), -0.5 + 1e-16) /
                                (1.0 + grad_sq.array().sqrt());
    res.lambda.array() += step * g.grad.array();

    ema = 0.9 * ema + 0.1 * res.lambda;
    // A window that ends on a dead iteration (every draw flagged) must not
    // count as convergence: the parameters only stood still for lack of a
    // usable gradient.
    if (check_convergence && consecutive_bad == 0 && t % config.check_every == 0) {
      if (have_snapshot) {
        const double drift = (ema - snapshot).cwiseAbs().maxCoeff() / config.check_every;
        if (drift < config.threshold) {
          res.converged = true;
          break;
        }
      }
      snapshot = ema;
      have_snapshot = true;
    }
  }
  // The smoothed iterate averages out the Monte Carlo jitter of the raw
  // final step and is what stationarity was judged on.
  res.lambda = ema;
  return res;
}

}  // namespace

ViFit fit_vi(const LogDensityTarget& target, const ViConfig& config) {
  if (config.mc_samples < 1) throw std::invalid_argument("vi needs mc_samples >= 1");
  if (config.max_iters < 1) throw std::invalid_argument("vi needs max_iters >= 1");
  if (config.check_every < 1) throw std::invalid_argument("vi needs check_every >= 1");
  if (config.elbo_samples < 1) throw std::invalid_argument("vi needs elbo_samples >= 1");
  if (config.probe_iters < 1) throw std::invalid_argument("vi needs probe_iters >= 1");
  if (!(config.threshold > 0.0)) throw std::invalid_argument("vi needs threshold > 0");
  if (config.rate < 0.0) throw std::invalid_argument("vi rate must be >= 0");
  const auto start = std::chrono::steady_clock::now();

  const int j = target.dim();
  const std::uint64_t monitor_seed = Rng::derive(config.seed, 0x564d4f4eull);

  double rate = config.rate;
  if (rate == 0.0) {
    // Short probe run per candidate; identical per-iteration seeds give all
    // candidates the same draws, so the comparison is noise-matched.
    const double candidates[] = {0.01, 0.05, 0.1};
    double best_score = kNegInf;
    for (double candidate : candidates) {
      double score = kNegInf;
      try {
        const OptimizeResult probe =
            optimize_elbo(target, config, candidate, config.probe_iters, false);
        const VariationalParams probe_params = unpack_params(config.family, j, probe.lambda);
        const ElboEstimate est =
            elbo_estimate(target, probe_params, config.elbo_samples, monitor_seed);
        if (std::isfinite(est.value)) score = est.value;
      } catch (const std::runtime_error&) {
        // A candidate that diverges during its probe is simply skipped.
      }
      if (score > best_score) {
        best_score = score;
        rate = candidate;
      }
    }
    if (!(best_score > kNegInf)) rate = candidates[0];
  }

  const OptimizeResult res = optimize_elbo(target, config, rate, config.max_iters, true);

  ViFit fit;
  fit.params = unpack_params(config.family, j, res.lambda);
  fit.elbo_trajectory = res.trajectory;
  fit.iterations = res.iterations;
  fit.converged = res.converged;
  fit.rate = rate;
  const ElboEstimate final_est =
      elbo_estimate(target, fit.params, config.elbo_samples, monitor_seed);
  fit.final_elbo = final_est.value;
  fit.final_elbo_flagged = final_est.flagged;
  fit.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return fit;
}

Eigen::MatrixXd draw_vi_samples(const VariationalParams& params, int count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("draw_vi_samples needs count >= 1");
  const int j = params.latent_dim();
  Eigen::MatrixXd draws(count, j);
  Rng rng(seed);
  for (int m = 0; m < count; ++m) draws.row(m) = params.transform(rng.normal_vector(j)).transpose();
  return draws;
}

}  // namespace fbgpr
