#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace fbgpr {

// Sample autocorrelation at lags 0..max_lag with 1/N normalization (biased,
// guarantees a positive semidefinite sequence).  Index t holds the lag-t
// value; entry 0 is always 1.  Constant series raise std::domain_error.
Eigen::VectorXd autocorrelation(const Eigen::VectorXd& series, int max_lag);

// Multi-chain effective sample size.  Combined autocorrelations use the
// within- and between-chain variance decomposition, summed over Geyer
// initial positive pairs and capped at the total draw count.  Chains must
// have equal length >= 10; a zero-variance slot raises std::domain_error.
double effective_sample_size(const std::vector<Eigen::VectorXd>& chains);

// Split-chain potential scale reduction factor over >= 2 chains.  Each
// chain is halved (middle element dropped when odd) before the classic
// between/within comparison.  Zero within-chain variance raises
// std::domain_error.
double split_rhat(const std::vector<Eigen::VectorXd>& chains);

// Shortest contiguous interval of sorted samples containing ceil(mass * n)
// of them.  Ties resolve to the leftmost window.
std::pair<double, double> hpd_interval(const Eigen::VectorXd& samples, double mass = 0.95);

struct SlotSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double mc_error = 0.0;
  double hpd_lower = 0.0;
  double hpd_upper = 0.0;
  double n_eff = 0.0;
  double rhat = 0.0;
};

// Per-slot posterior summaries from per-chain draw matrices (draws x slots,
// one matrix per chain).  Statistics that cannot be computed for a slot
// (single chain, too few draws, zero variance) are reported as NaN in that
// cell instead of failing the whole table; NaN renders as "n/a".
std::vector<SlotSummary> summarize_draws(const std::vector<std::string>& names,
                                         const std::vector<Eigen::MatrixXd>& chains);

std::string render_summary(const std::vector<SlotSummary>& rows);
std::string summary_csv(const std::vector<SlotSummary>& rows);

}  // namespace fbgpr
