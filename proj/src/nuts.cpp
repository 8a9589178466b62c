#include "fbgpr/nuts.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fbgpr/parallel.hpp"
#include "fbgpr/rng.hpp"

namespace fbgpr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Energy error beyond this marks the trajectory divergent.
constexpr double kDivergenceThreshold = 1000.0;

struct Phase {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double logp = kNegInf;
  bool ok = false;

  // Kinetic energy uses a diagonal metric: inv_mass holds the per-coordinate
  // inverse masses (estimated posterior variances after adaptation).
  double hamiltonian(const Eigen::VectorXd& inv_mass) const {
    return logp - 0.5 * (p.array().square() * inv_mass.array()).sum();
  }
};

Phase evaluate_phase(const LogDensityTarget& target, Eigen::VectorXd q, Eigen::VectorXd p) {
  Phase z;
  const TargetEval ev = target.value_and_grad(q);
  z.q = std::move(q);
  z.p = std::move(p);
  z.grad = ev.grad;
  z.logp = ev.value;
  z.ok = ev.ok;
  return z;
}

// One leapfrog step from z; step < 0 integrates backward in time.
Phase leapfrog_step(const LogDensityTarget& target, const Phase& z, double step,
                    const Eigen::VectorXd& inv_mass) {
  Eigen::VectorXd p_half = z.p + 0.5 * step * z.grad;
  Eigen::VectorXd q_new = z.q + step * p_half.cwiseProduct(inv_mass);
  Phase out = evaluate_phase(target, std::move(q_new), std::move(p_half));
  if (out.ok) out.p += 0.5 * step * out.grad;
  return out;
}

Eigen::VectorXd sample_momentum(Rng& rng, const Eigen::VectorXd& inv_mass) {
  const int dim = static_cast<int>(inv_mass.size());
  return rng.normal_vector(dim).cwiseQuotient(inv_mass.cwiseSqrt());
}

double log_add_exp(double a, double b) {
  const double m = std::max(a, b);
  if (m == kNegInf) return kNegInf;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct TreeStats {
  double sum_alpha = 0.0;
  long n_alpha = 0;
};

// A balanced subtree of the trajectory.  minus/plus are the endpoints in
// time order regardless of the direction the subtree was built in; rho is
// the sum of momenta over all states, log_w the log total multinomial
// weight exp(H - H0).
struct Tree {
  Phase minus, plus;
  Eigen::VectorXd rho;
  double log_w = kNegInf;
  Eigen::VectorXd prop_q;
  Eigen::VectorXd prop_grad;
  double prop_logp = kNegInf;
  bool valid = false;
  bool divergent = false;
};

bool no_uturn(const Eigen::VectorXd& rho, const Phase& minus, const Phase& plus,
              const Eigen::VectorXd& inv_mass) {
  const Eigen::VectorXd v = rho.cwiseProduct(inv_mass);
  return v.dot(minus.p) > 0.0 && v.dot(plus.p) > 0.0;
}

Tree build_tree(const LogDensityTarget& target, int depth, const Phase& from, int dir,
                double step, double h0, const Eigen::VectorXd& inv_mass, Rng& rng,
                TreeStats& stats) {
  if (depth == 0) {
    Phase z = leapfrog_step(target, from, dir * step, inv_mass);
    const double dh = z.ok ? z.hamiltonian(inv_mass) - h0 : kNegInf;
    stats.sum_alpha += dh >= 0.0 ? 1.0 : std::exp(dh);
    stats.n_alpha += 1;

    Tree t;
    t.divergent = !(dh > -kDivergenceThreshold);
    t.valid = !t.divergent;
    if (t.valid) {
      t.log_w = dh;
      t.rho = z.p;
      t.prop_q = z.q;
      t.prop_grad = z.grad;
      t.prop_logp = z.logp;
      t.minus = z;
      t.plus = std::move(z);
    }
    return t;
  }

  Tree first = build_tree(target, depth - 1, from, dir, step, h0, inv_mass, rng, stats);
  if (!first.valid) return first;

  const Phase& far_end = dir > 0 ? first.plus : first.minus;
  Tree second = build_tree(target, depth - 1, far_end, dir, step, h0, inv_mass, rng, stats);

  Tree merged;
  merged.divergent = second.divergent;
  if (!second.valid) {
    merged.valid = false;
    return merged;
  }

  merged.minus = dir > 0 ? std::move(first.minus) : std::move(second.minus);
  merged.plus = dir > 0 ? std::move(second.plus) : std::move(first.plus);
  merged.log_w = log_add_exp(first.log_w, second.log_w);
  // Unbiased multinomial choice between the halves, by relative weight.
  const double take_second = std::exp(second.log_w - merged.log_w);
  if (rng.uniform() < take_second) {
    merged.prop_q = std::move(second.prop_q);
    merged.prop_grad = std::move(second.prop_grad);
    merged.prop_logp = second.prop_logp;
  } else {
    merged.prop_q = std::move(first.prop_q);
    merged.prop_grad = std::move(first.prop_grad);
    merged.prop_logp = first.prop_logp;
  }
  merged.rho = first.rho + second.rho;
  merged.valid = no_uturn(merged.rho, merged.minus, merged.plus, inv_mass);
  return merged;
}

struct TransitionResult {
  Eigen::VectorXd q;
  Eigen::VectorXd grad;
  double logp = kNegInf;
  int depth = 0;
  bool divergent = false;
  double accept_stat = 0.0;
};

TransitionResult transition(const LogDensityTarget& target, const Phase& current,
                            double step, int max_depth, const Eigen::VectorXd& inv_mass,
                            Rng& rng) {
  Phase z0 = current;
  z0.p = sample_momentum(rng, inv_mass);
  const double h0 = z0.hamiltonian(inv_mass);

  Phase minus = z0, plus = z0;
  Eigen::VectorXd rho = z0.p;
  double log_w = 0.0;  // weight of the initial state relative to itself

  TransitionResult res;
  res.q = current.q;
  res.grad = current.grad;
  res.logp = current.logp;

  TreeStats stats;
  for (int depth = 0; depth < max_depth; ++depth) {
    const int dir = rng.uniform() < 0.5 ? -1 : 1;
    const Phase& from = dir > 0 ? plus : minus;
    Tree sub = build_tree(target, depth, from, dir, step, h0, inv_mass, rng, stats);
    res.divergent = res.divergent || sub.divergent;
    if (!sub.valid) break;

    // Biased progressive sampling: favour the fresh subtree, capped at 1.
    const double p_take = std::exp(std::min(0.0, sub.log_w - log_w));
    if (rng.uniform() < p_take) {
      res.q = std::move(sub.prop_q);
      res.grad = std::move(sub.prop_grad);
      res.logp = sub.prop_logp;
    }
    log_w = log_add_exp(log_w, sub.log_w);
    if (dir > 0) plus = std::move(sub.plus);
    else minus = std::move(sub.minus);
    rho += sub.rho;
    res.depth = depth + 1;
    if (!no_uturn(rho, minus, plus, inv_mass)) break;
  }
  res.accept_stat = stats.n_alpha > 0 ? stats.sum_alpha / stats.n_alpha : 0.0;
  return res;
}

// Doubling heuristic for the starting step size: scale until one leapfrog
// step moves the acceptance ratio across 1/2.
double initial_step_size(const LogDensityTarget& target, const Phase& start,
                         const Eigen::VectorXd& inv_mass, Rng& rng) {
  Phase z = start;
  z.p = sample_momentum(rng, inv_mass);
  const double h0 = z.hamiltonian(inv_mass);

  double step = 1.0;
  Phase trial = leapfrog_step(target, z, step, inv_mass);
  for (int guard = 0; !trial.ok && guard < 60; ++guard) {
    step *= 0.5;
    trial = leapfrog_step(target, z, step, inv_mass);
  }
  if (!trial.ok) return 1e-3;

  double dh = trial.hamiltonian(inv_mass) - h0;
  const double a = dh > std::log(0.5) ? 1.0 : -1.0;
  for (int guard = 0; guard < 100; ++guard) {
    if (!(a * dh > -a * std::log(2.0))) break;
    step *= a > 0 ? 2.0 : 0.5;
    if (step < 1e-16 || step > 1e16) break;
    trial = leapfrog_step(target, z, step, inv_mass);
    dh = trial.ok ? trial.hamiltonian(inv_mass) - h0 : kNegInf;
  }
  return step;
}

// Warmup layout: a step-size-only opening, a series of doubling windows in
// which the diagonal metric is re-estimated from the warmup draws, then a
// closing step-size-only stretch.  Short warmups keep the unit metric.
struct AdaptSchedule {
  int init_end = 0;
  std::vector<int> window_ends;
  bool adapt_metric = false;
};

AdaptSchedule make_schedule(int warmup) {
  AdaptSchedule s;
  if (warmup < 60) return s;
  const int init_buf = std::min(75, warmup / 5);
  const int term_buf = std::min(50, warmup / 10);
  const int middle_end = warmup - term_buf;
  int w = 25;
  if (middle_end - init_buf < w) return s;
  s.adapt_metric = true;
  s.init_end = init_buf;
  int pos = init_buf;
  while (true) {
    int end = pos + w;
    // Absorb the remainder when the next doubling would not fit.
    if (end + 2 * w > middle_end) end = middle_end;
    s.window_ends.push_back(end);
    if (end >= middle_end) break;
    pos = end;
    w *= 2;
  }
  return s;
}

ChainResult run_chain(const LogDensityTarget& target, const NutsConfig& cfg, int chain_id) {
  const int dim = target.dim();
  Rng rng = Rng::substream(cfg.seed, static_cast<std::uint64_t>(chain_id));

  const Eigen::VectorXd base =
      cfg.init.size() ? cfg.init : Eigen::VectorXd::Zero(dim);
  if (base.size() != dim) throw std::invalid_argument("nuts: init dimension mismatch");

  Phase cur;
  for (int attempt = 0; attempt < 100 && !cur.ok; ++attempt) {
    Eigen::VectorXd q = base;
    for (int j = 0; j < dim; ++j) q[j] += rng.uniform(-cfg.init_jitter, cfg.init_jitter);
    cur = evaluate_phase(target, std::move(q), Eigen::VectorXd::Zero(dim));
  }
  if (!cur.ok) {
    throw std::runtime_error("nuts: chain " + std::to_string(chain_id) +
                             " found no feasible start after 100 jitter attempts");
  }

  // Dual averaging (gamma, t0, kappa from the reference schedule).
  constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;
  Eigen::VectorXd inv_mass = Eigen::VectorXd::Ones(dim);
  const AdaptSchedule sched = make_schedule(cfg.warmup);

  double step = initial_step_size(target, cur, inv_mass, rng);
  double mu = std::log(10.0 * step);
  double log_step_bar = 0.0, hbar = 0.0;
  int da_t = 0;

  Eigen::VectorXd acc_mean = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd acc_m2 = Eigen::VectorXd::Zero(dim);
  long acc_n = 0;
  size_t next_window = 0;

  for (int t = 1; t <= cfg.warmup; ++t) {
    TransitionResult res = transition(target, cur, step, cfg.max_depth, inv_mass, rng);
    cur.q = std::move(res.q);
    cur.grad = std::move(res.grad);
    cur.logp = res.logp;

    ++da_t;
    const double h = cfg.target_accept - res.accept_stat;
    hbar = (1.0 - 1.0 / (da_t + kT0)) * hbar + h / (da_t + kT0);
    const double log_step = mu - std::sqrt(static_cast<double>(da_t)) / kGamma * hbar;
    const double w = std::pow(static_cast<double>(da_t), -kKappa);
    log_step_bar = w * log_step + (1.0 - w) * log_step_bar;
    step = std::exp(log_step);

    if (sched.adapt_metric && next_window < sched.window_ends.size() && t > sched.init_end) {
      acc_n += 1;
      const Eigen::VectorXd delta = cur.q - acc_mean;
      acc_mean += delta / static_cast<double>(acc_n);
      acc_m2 += delta.cwiseProduct(cur.q - acc_mean);
      if (t == sched.window_ends[next_window]) {
        if (acc_n >= 2) {
          const Eigen::VectorXd var = acc_m2 / static_cast<double>(acc_n - 1);
          const double shrink = acc_n / (acc_n + 5.0);
          inv_mass = (shrink * var.array() + (1.0 - shrink) * 1e-3).cwiseMax(1e-10);
        }
        acc_mean.setZero();
        acc_m2.setZero();
        acc_n = 0;
        ++next_window;
        // New metric invalidates the tuned step: restart dual averaging.
        step = initial_step_size(target, cur, inv_mass, rng);
        mu = std::log(10.0 * step);
        log_step_bar = 0.0;
        hbar = 0.0;
        da_t = 0;
      }
    }
  }
  step = std::exp(log_step_bar);

  ChainResult out;
  out.step_size = step;
  out.draws.resize(cfg.samples, dim);
  out.lp.resize(cfg.samples);
  out.divergent.resize(cfg.samples);
  out.tree_depth.resize(cfg.samples);

  double accept_sum = 0.0;
  for (int i = 0; i < cfg.samples; ++i) {
    TransitionResult res = transition(target, cur, step, cfg.max_depth, inv_mass, rng);
    cur.q = std::move(res.q);
    cur.grad = std::move(res.grad);
    cur.logp = res.logp;

    out.draws.row(i) = cur.q;
    out.lp[i] = cur.logp;
    out.divergent[i] = res.divergent ? 1 : 0;
    out.tree_depth[i] = res.depth;
    out.divergence_count += res.divergent ? 1 : 0;
    accept_sum += res.accept_stat;
  }
  out.mean_accept = accept_sum / cfg.samples;
  out.healthy = out.divergence_count <= 0.25 * cfg.samples;
  return out;
}

}  // namespace

LeapfrogResult leapfrog(const LogDensityTarget& target, const Eigen::VectorXd& position,
                        const Eigen::VectorXd& momentum, double step) {
  Phase z = evaluate_phase(target, position, momentum);
  LeapfrogResult out;
  if (!z.ok) return out;
  Phase next = leapfrog_step(target, z, step, Eigen::VectorXd::Ones(position.size()));
  out.position = next.q;
  out.momentum = next.p;
  out.logp = next.logp;
  out.ok = next.ok;
  return out;
}

std::vector<Eigen::MatrixXd> SamplerRun::draw_matrices() const {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(chains.size());
  for (const auto& c : chains) out.push_back(c.draws);
  return out;
}

SamplerRun sample_nuts(const LogDensityTarget& target, const NutsConfig& config,
                       const std::vector<std::string>& slot_names) {
  if (config.chains < 1) throw std::invalid_argument("nuts: chains must be >= 1");
  if (config.warmup < 1) throw std::invalid_argument("nuts: warmup must be >= 1");
  if (config.samples < 1) throw std::invalid_argument("nuts: samples must be >= 1");
  if (!(config.target_accept > 0.0 && config.target_accept < 1.0)) {
    throw std::invalid_argument("nuts: target acceptance must lie in (0, 1)");
  }
  if (config.max_depth < 1) throw std::invalid_argument("nuts: max depth must be >= 1");
  if (static_cast<int>(slot_names.size()) != target.dim()) {
    throw std::invalid_argument("nuts: slot name count does not match target dimension");
  }

  const auto start = std::chrono::steady_clock::now();
  SamplerRun run;
  run.slot_names = slot_names;
  run.warmup = config.warmup;
  run.target_accept = config.target_accept;
  run.seed = config.seed;
  run.chains.resize(config.chains);

  parallel_for(
      config.chains,
      [&](int c) { run.chains[c] = run_chain(target, config, c); },
      config.threads);

  run.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

ChainSelection select_prediction_chain(const SamplerRun& run) {
  if (run.chains.empty()) throw std::invalid_argument("select_prediction_chain: no chains");
  int best = -1;
  double best_lp = kNegInf;
  for (size_t c = 0; c < run.chains.size(); ++c) {
    if (!run.chains[c].healthy) continue;
    const double mean_lp = run.chains[c].mean_lp();
    if (best < 0 || mean_lp > best_lp) {
      best = static_cast<int>(c);
      best_lp = mean_lp;
    }
  }
  if (best < 0) {
    throw std::runtime_error(
        "select_prediction_chain: every chain exceeded the 25% divergence budget");
  }
  ChainSelection sel;
  sel.index = best;
  sel.rationale = "healthy chain with highest mean log-density (" +
                  std::to_string(best_lp) + "), " +
                  std::to_string(run.chains.size()) + " chains considered";
  return sel;
}

}  // namespace fbgpr
