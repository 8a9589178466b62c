#include "fbgpr/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fbgpr/io.hpp"

namespace fbgpr {

namespace {

double sample_mean(const Eigen::VectorXd& v) { return v.mean(); }

double sample_var(const Eigen::VectorXd& v) {
  const int n = static_cast<int>(v.size());
  if (n < 2) return 0.0;
  const double m = v.mean();
  return (v.array() - m).square().sum() / (n - 1);
}

// Autocovariance at one lag, 1/N normalization, mean removed.
double autocov(const Eigen::VectorXd& v, double mean, int lag) {
  const int n = static_cast<int>(v.size());
  double acc = 0.0;
  for (int i = 0; i + lag < n; ++i) acc += (v[i] - mean) * (v[i + lag] - mean);
  return acc / n;
}

}  // namespace

Eigen::VectorXd autocorrelation(const Eigen::VectorXd& series, int max_lag) {
  const int n = static_cast<int>(series.size());
  if (n < 2) throw std::invalid_argument("autocorrelation: need at least 2 points");
  if (max_lag < 0 || max_lag >= n) {
    throw std::invalid_argument("autocorrelation: max_lag out of range");
  }
  const double mean = series.mean();
  const double c0 = autocov(series, mean, 0);
  if (c0 <= 0.0) throw std::domain_error("autocorrelation: series has zero variance");
  Eigen::VectorXd rho(max_lag + 1);
  for (int t = 0; t <= max_lag; ++t) rho[t] = autocov(series, mean, t) / c0;
  return rho;
}

namespace {

struct PooledVariance {
  double within = 0.0;
  double var_plus = 0.0;  // (N-1)/N * W + B/N
  int n = 0;              // per-chain length
};

PooledVariance pooled_variance(const std::vector<Eigen::VectorXd>& chains) {
  const int m = static_cast<int>(chains.size());
  const int n = static_cast<int>(chains[0].size());
  double within = 0.0;
  Eigen::VectorXd means(m);
  for (int c = 0; c < m; ++c) {
    if (chains[c].size() != n) {
      throw std::invalid_argument("chains must have equal length");
    }
    means[c] = sample_mean(chains[c]);
    within += sample_var(chains[c]);
  }
  within /= m;
  const double between_over_n = m > 1 ? sample_var(means) : 0.0;
  PooledVariance out;
  out.within = within;
  out.var_plus = (n - 1.0) / n * within + between_over_n;
  out.n = n;
  return out;
}

}  // namespace

double effective_sample_size(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.empty()) throw std::invalid_argument("ess: no chains");
  const int m = static_cast<int>(chains.size());
  const int n = static_cast<int>(chains[0].size());
  if (n < 10) throw std::invalid_argument("ess: chains shorter than 10 draws");

  const PooledVariance pv = pooled_variance(chains);
  const double total = static_cast<double>(m) * n;
  if (pv.var_plus <= 0.0) throw std::domain_error("ess: slot has zero variance");

  std::vector<double> means(m);
  for (int c = 0; c < m; ++c) means[c] = sample_mean(chains[c]);

  // Combined autocorrelation rho_t = 1 - (W - mean_c cov_t^c) / var_plus,
  // evaluated lazily and summed while Geyer pairs stay positive.
  auto rho_at = [&](int t) {
    double cov = 0.0;
    for (int c = 0; c < m; ++c) cov += autocov(chains[c], means[c], t);
    cov /= m;
    return 1.0 - (pv.within - cov) / pv.var_plus;
  };

  // tau = -1 + 2 * sum of successive-lag pairs (rho_2k + rho_2k+1), summed
  // until the first nonpositive pair.  The k = 0 pair is rho_0 + rho_1.
  double tau = -1.0;
  for (int k = 0; 2 * k + 1 < n; ++k) {
    const double p = (k == 0 ? 1.0 : rho_at(2 * k)) + rho_at(2 * k + 1);
    if (p <= 0.0) break;
    tau += 2.0 * p;
  }
  if (tau < 1e-12) tau = 1e-12;
  return std::min(total / tau, total);
}

double split_rhat(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.size() < 2) throw std::invalid_argument("rhat: need at least 2 chains");
  std::vector<Eigen::VectorXd> halves;
  for (const auto& chain : chains) {
    const int n = static_cast<int>(chain.size());
    if (n < 4) throw std::invalid_argument("rhat: chains shorter than 4 draws");
    if (chain.size() != chains[0].size()) {
      throw std::invalid_argument("rhat: chains must have equal length");
    }
    const int half = n / 2;
    halves.push_back(chain.head(half));
    halves.push_back(chain.tail(half));
  }
  const int m = static_cast<int>(halves.size());
  const int n = static_cast<int>(halves[0].size());

  Eigen::VectorXd means(m);
  double within = 0.0;
  for (int c = 0; c < m; ++c) {
    means[c] = sample_mean(halves[c]);
    within += sample_var(halves[c]);
  }
  within /= m;
  if (within <= 0.0) throw std::domain_error("rhat: zero within-chain variance");
  const double between_over_n = sample_var(means);
  const double var_plus = (n - 1.0) / n * within + between_over_n;
  return std::sqrt(var_plus / within);
}

std::pair<double, double> hpd_interval(const Eigen::VectorXd& samples, double mass) {
  const int n = static_cast<int>(samples.size());
  if (n == 0) throw std::invalid_argument("hpd: no samples");
  if (!(mass > 0.0 && mass < 1.0)) throw std::invalid_argument("hpd: mass must be in (0, 1)");
  std::vector<double> sorted(samples.data(), samples.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const int w = std::min(n, static_cast<int>(std::ceil(mass * n)));
  double best_lo = sorted[0], best_hi = sorted[w - 1];
  double best_width = best_hi - best_lo;
  for (int i = 1; i + w <= n; ++i) {
    const double width = sorted[i + w - 1] - sorted[i];
    if (width < best_width) {
      best_width = width;
      best_lo = sorted[i];
      best_hi = sorted[i + w - 1];
    }
  }
  return {best_lo, best_hi};
}

std::vector<SlotSummary> summarize_draws(const std::vector<std::string>& names,
                                         const std::vector<Eigen::MatrixXd>& chains) {
  if (chains.empty()) throw std::invalid_argument("summarize: no chains");
  const int slots = static_cast<int>(chains[0].cols());
  if (static_cast<int>(names.size()) != slots) {
    throw std::invalid_argument("summarize: name count does not match slot count");
  }

  std::vector<SlotSummary> rows;
  rows.reserve(slots);
  for (int j = 0; j < slots; ++j) {
    std::vector<Eigen::VectorXd> slot_chains;
    long total = 0;
    for (const auto& chain : chains) {
      slot_chains.push_back(chain.col(j));
      total += chain.rows();
    }
    Eigen::VectorXd pooled(total);
    long at = 0;
    for (const auto& v : slot_chains) {
      pooled.segment(at, v.size()) = v;
      at += v.size();
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    SlotSummary row;
    row.name = names[j];
    row.mean = pooled.mean();
    row.sd = std::sqrt(sample_var(pooled));
    // Degenerate slots (too few draws, one chain, zero variance) flag the
    // affected cells rather than failing the table.
    try {
      row.n_eff = effective_sample_size(slot_chains);
      row.mc_error = row.sd / std::sqrt(row.n_eff);
    } catch (const std::exception&) {
      row.n_eff = nan;
      row.mc_error = nan;
    }
    try {
      row.rhat = split_rhat(slot_chains);
    } catch (const std::exception&) {
      row.rhat = nan;
    }
    const auto hpd = hpd_interval(pooled, 0.95);
    row.hpd_lower = hpd.first;
    row.hpd_upper = hpd.second;
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

const std::vector<std::string> kSummaryHeader = {
    "slot", "mean", "sd", "mc_error", "hpd_2.5", "hpd_97.5", "n_eff", "rhat"};

std::vector<std::string> row_fields(const SlotSummary& r) {
  return {r.name,          fmt(r.mean),      fmt(r.sd),    fmt(r.mc_error),
          fmt(r.hpd_lower), fmt(r.hpd_upper), fmt(r.n_eff), fmt(r.rhat)};
}

}  // namespace

std::string render_summary(const std::vector<SlotSummary>& rows) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) cells.push_back(row_fields(r));
  return render_table(kSummaryHeader, cells);
}

std::string summary_csv(const std::vector<SlotSummary>& rows) {
  std::string out = csv_row(kSummaryHeader);
  for (const auto& r : rows) out += csv_row(row_fields(r));
  return out;
}

}  // namespace fbgpr
