#include "fbgpr/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "fbgpr/gp.hpp"
#include "fbgpr/parallel.hpp"
#include "fbgpr/rng.hpp"

namespace fbgpr {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double gaussian_log_density(double y, double mean, double var) {
  if (!(var > 0.0)) return -std::numeric_limits<double>::infinity();
  const double r = y - mean;
  return -0.5 * (kLog2Pi + std::log(var) + r * r / var);
}

}  // namespace

MixtureBuild build_mixture(const KernelExpr& expr, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& y, const Eigen::MatrixXd& Xstar,
                           const Eigen::MatrixXd& eta_draws, bool full_cov) {
  if (eta_draws.rows() < 1) throw std::invalid_argument("mixture needs at least one draw");
  if (eta_draws.cols() != expr.slot_count())
    throw std::invalid_argument("draw width does not match kernel slot count");
  if (!eta_draws.allFinite()) throw std::invalid_argument("draws must be finite");
  if (Xstar.cols() != X.cols()) throw std::invalid_argument("test input dimension mismatch");

  GpWorkspace gp(expr, X, y);
  const int m_in = static_cast<int>(eta_draws.rows());
  const int nstar = static_cast<int>(Xstar.rows());

  std::vector<Eigen::VectorXd> means, vars;
  std::vector<Eigen::MatrixXd> covs;
  std::vector<double> noises;
  MixtureBuild out;
  for (int m = 0; m < m_in; ++m) {
    const ThetaVector theta(eta_draws.row(m).transpose());
    try {
      GPPosteriorGaussian post = gp.predict(theta, Xstar, full_cov);
      means.push_back(std::move(post.mean));
      vars.push_back(std::move(post.var));
      if (full_cov) covs.push_back(std::move(post.cov));
      noises.push_back(gp.noise_variance(theta));
    } catch (const NotPositiveDefiniteError&) {
      out.mixture.dropped.push_back(m);
    }
  }
  if (means.empty()) {
    std::ostringstream msg;
    msg << "all " << m_in << " mixture components failed to factor";
    throw std::runtime_error(msg.str());
  }

  const int m_ok = static_cast<int>(means.size());
  out.mixture.means.resize(m_ok, nstar);
  out.mixture.vars.resize(m_ok, nstar);
  out.noise_vars.resize(m_ok);
  for (int m = 0; m < m_ok; ++m) {
    out.mixture.means.row(m) = means[m].transpose();
    out.mixture.vars.row(m) = vars[m].transpose();
    out.noise_vars[m] = noises[m];
  }
  out.mixture.covs = std::move(covs);
  return out;
}

MixtureMoments mixture_moments(const PredictiveMixture& mix) {
  if (mix.components() < 1) throw std::invalid_argument("empty mixture");
  MixtureMoments mom;
  mom.mean = mix.means.colwise().mean().transpose();
  const Eigen::MatrixXd centered = mix.means.rowwise() - mom.mean.transpose();
  mom.var = (mix.vars.colwise().mean() + centered.array().square().colwise().mean().matrix())
                .transpose();
  return mom;
}

QuantileBand empirical_quantiles(const PredictiveMixture& mix, int t_samples, double lower_pct,
                                 double upper_pct, std::uint64_t seed) {
  if (mix.components() < 1) throw std::invalid_argument("empty mixture");
  if (t_samples < 100) throw std::invalid_argument("quantile sampling needs T >= 100");
  if (!(0.0 < lower_pct && lower_pct < upper_pct && upper_pct < 100.0))
    throw std::invalid_argument("quantile percentages must satisfy 0 < lower < upper < 100");

  const int m = mix.components();
  const int nstar = mix.points();
  const auto rank = [t_samples](double pct) {
    const int r = static_cast<int>(std::ceil(pct / 100.0 * t_samples));
    return std::clamp(r, 1, t_samples);
  };
  const int r_lo = rank(lower_pct);
  const int r_hi = rank(upper_pct);

  QuantileBand band;
  band.lower.resize(nstar);
  band.upper.resize(nstar);
  parallel_for(nstar, [&](int i) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
    std::vector<double> buf(static_cast<std::size_t>(t_samples));
    for (int t = 0; t < t_samples; ++t) {
      const int k = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(m)));
      const double sd = std::sqrt(std::max(mix.vars(k, i), 0.0));
      buf[static_cast<std::size_t>(t)] = mix.means(k, i) + sd * rng.normal();
    }
    std::nth_element(buf.begin(), buf.begin() + (r_hi - 1), buf.end());
    band.upper[i] = buf[static_cast<std::size_t>(r_hi - 1)];
    std::nth_element(buf.begin(), buf.begin() + (r_lo - 1), buf.begin() + r_hi);
    band.lower[i] = buf[static_cast<std::size_t>(r_lo - 1)];
  });
  return band;
}

RmseResult rmse_metric(const Eigen::VectorXd& predicted_mean, const Eigen::VectorXd& actual) {
  const int n = static_cast<int>(actual.size());
  if (n < 1) throw std::invalid_argument("rmse needs a non-empty test set");
  if (predicted_mean.size() != actual.size())
    throw std::invalid_argument("rmse length mismatch");
  const Eigen::ArrayXd sq = (predicted_mean - actual).array().square();
  RmseResult res;
  res.value = std::sqrt(sq.mean());
  if (n < 2 || res.value == 0.0) {
    res.se = 0.0;
    return res;
  }
  const double var_sq = (sq - sq.mean()).square().sum() / (n - 1);
  res.se = std::sqrt(var_sq) / (2.0 * res.value * std::sqrt(static_cast<double>(n)));
  return res;
}

double nlpd_metric(const PredictiveMixture& mix, const Eigen::VectorXd& actual,
                   const Eigen::VectorXd& noise_vars) {
  const int m = mix.components();
  const int n = mix.points();
  if (m < 1) throw std::invalid_argument("empty mixture");
  if (actual.size() != n) throw std::invalid_argument("nlpd target length mismatch");
  if (noise_vars.size() != m)
    throw std::invalid_argument("nlpd needs one noise variance per component");

  const double log_m = std::log(static_cast<double>(m));
  double total = 0.0;
  std::vector<double> ls(static_cast<std::size_t>(m));
  for (int i = 0; i < n; ++i) {
    double max_l = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) {
      ls[static_cast<std::size_t>(j)] =
          gaussian_log_density(actual[i], mix.means(j, i), mix.vars(j, i) + noise_vars[j]);
      max_l = std::max(max_l, ls[static_cast<std::size_t>(j)]);
    }
    if (!std::isfinite(max_l)) {
      total += std::numeric_limits<double>::infinity();
      continue;
    }
    double sum = 0.0;
    for (int j = 0; j < m; ++j) sum += std::exp(ls[static_cast<std::size_t>(j)] - max_l);
    total += -(max_l + std::log(sum) - log_m);
  }
  return total / n;
}

Eigen::MatrixXd equal_stride_thin(const Eigen::MatrixXd& draws, int count) {
  const int rows = static_cast<int>(draws.rows());
  if (count < 1) throw std::invalid_argument("thinning needs count >= 1");
  if (rows <= count) return draws;
  if (count == 1) return draws.row(rows - 1);
  Eigen::MatrixXd out(count, draws.cols());
  for (int i = 0; i < count; ++i) {
    const int idx = static_cast<int>(
        std::llround(static_cast<double>(i) * (rows - 1) / (count - 1)));
    out.row(i) = draws.row(idx);
  }
  return out;
}

}  // namespace fbgpr
