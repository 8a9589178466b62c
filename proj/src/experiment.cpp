#include "fbgpr/experiment.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fbgpr/dataset.hpp"
#include "fbgpr/diagnostics.hpp"
#include "fbgpr/gp.hpp"
#include "fbgpr/io.hpp"
#include "fbgpr/kernel.hpp"
#include "fbgpr/mixture.hpp"
#include "fbgpr/model.hpp"
#include "fbgpr/nuts.hpp"
#include "fbgpr/parallel.hpp"
#include "fbgpr/rng.hpp"
#include "fbgpr/trace.hpp"
#include "fbgpr/vi.hpp"

namespace fbgpr {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

// Per-consumer seed substreams, so no two stages ever share a raw stream.
constexpr std::uint64_t kStreamMl2 = 0x6d6c32;
constexpr std::uint64_t kStreamNuts = 0x6e757473;
constexpr std::uint64_t kStreamVi = 0x7669;
constexpr std::uint64_t kStreamViDraws = 0x76696472;
constexpr std::uint64_t kStreamQuantile = 0x7175616e;

// One run per output directory at a time; stale locks must be removed by
// hand (the path is named in the error).
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::string& dir) : path_(fs::path(dir) / ".lock") {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
      throw std::runtime_error("output directory is busy (lockfile " + path_.string() +
                               " exists; remove it if no other run is active)");
    const std::string pid = std::to_string(::getpid()) + "\n";
    ssize_t ignored = ::write(fd, pid.c_str(), pid.size());
    (void)ignored;
    ::close(fd);
    held_ = true;
  }
  ~DirectoryLock() {
    if (held_) ::unlink(path_.c_str());
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
  bool held_ = false;
};

std::string artifact_path(const ExperimentConfig& config, const char* name) {
  return (fs::path(config.out_dir) / name).string();
}

std::string prior_literal(const SlotPrior& p) {
  const char* name = p.kind == SlotPrior::Kind::NormalInLogSpace    ? "normal_log"
                     : p.kind == SlotPrior::Kind::GammaOnConstrained ? "gamma"
                                                                     : "normal";
  return std::string(name) + "(" + format_double(p.a) + ", " + format_double(p.b) + ")";
}

PriorSpec build_prior(const ExperimentConfig& config, const KernelExpr& expr,
                      const GpWorkspace& gp, ordered_json* meta) {
  const int j = expr.slot_count();
  PriorSpec prior = PriorSpec::vague(j, config.prior_default_std);
  (*meta)["centered_on_ml2"] = false;

  if (config.prior_center_on_ml2 && config.scheme != "ml2") {
    Ml2Options mo;
    mo.restarts = config.ml2_restarts;
    mo.max_iters = config.ml2_max_iters;
    mo.init_std = config.prior_default_std;
    mo.seed = Rng::derive(config.seed, kStreamMl2);
    const Ml2Result anchor = ml2_optimize(gp, mo);
    for (int s = 0; s < j; ++s) {
      if (expr.slot_roles()[static_cast<std::size_t>(s)] == SlotRole::Noise)
        prior.set(s, SlotPrior::gamma(config.noise_gamma_shape, config.noise_gamma_rate));
      else
        prior.set(s, SlotPrior::normal_log(anchor.theta.eta(s), config.prior_center_std));
    }
    (*meta)["centered_on_ml2"] = true;
    (*meta)["anchor_lml"] = anchor.lml;
  }

  for (const auto& [slot_name, literal] : config.slot_priors) {
    const auto& names = expr.slot_names();
    const auto it = std::find(names.begin(), names.end(), slot_name);
    if (it == names.end()) {
      std::ostringstream msg;
      msg << "prior override names unknown slot '" << slot_name << "'; kernel slots are:";
      for (const auto& n : names) msg << " " << n;
      throw std::invalid_argument(msg.str());
    }
    prior.set(static_cast<int>(it - names.begin()), parse_prior_literal(literal));
  }

  ordered_json slots = ordered_json::array();
  for (int s = 0; s < j; ++s)
    slots.push_back({{"slot", expr.slot_names()[static_cast<std::size_t>(s)]},
                     {"prior", prior_literal(prior.slot(s))}});
  (*meta)["slots"] = std::move(slots);
  return prior;
}

struct SchemeOutput {
  std::vector<ChainResult> chains;
  Eigen::MatrixXd prediction_draws;
  ordered_json meta;
  std::vector<SlotSummary> diagnostics;
  bool has_diagnostics = false;
  ordered_json vi_artifact;  // non-null only for the vi schemes
};

SchemeOutput run_ml2_scheme(const ExperimentConfig& config, const GpWorkspace& gp) {
  Ml2Options mo;
  mo.restarts = config.ml2_restarts;
  mo.max_iters = config.ml2_max_iters;
  mo.init_std = config.prior_default_std;
  mo.seed = Rng::derive(config.seed, kStreamMl2);
  const Ml2Result res = ml2_optimize(gp, mo);

  ChainResult cr;
  cr.draws = res.theta.eta().transpose();
  cr.lp = Eigen::VectorXd::Constant(1, res.lml);
  cr.divergent.assign(1, 0);
  cr.tree_depth.assign(1, 0);

  SchemeOutput out;
  out.prediction_draws = cr.draws;
  out.chains.push_back(std::move(cr));
  out.meta["kind"] = "ml2";
  out.meta["lml"] = res.lml;
  out.meta["best_restart"] = res.best_restart;
  ordered_json restarts = ordered_json::array();
  for (const auto& r : res.restarts)
    restarts.push_back({{"index", r.index},
                        {"usable", r.usable},
                        {"converged", r.converged},
                        {"lml", r.lml},
                        {"iters", r.iters},
                        {"note", r.note}});
  out.meta["restarts"] = std::move(restarts);
  return out;
}

SchemeOutput run_nuts_scheme(const ExperimentConfig& config, const KernelExpr& expr,
                             const GpWorkspace& gp, const GpLogJointTarget& target) {
  NutsConfig nc;
  nc.chains = config.nuts_chains;
  nc.warmup = config.nuts_warmup;
  nc.samples = config.nuts_samples;
  nc.target_accept = config.nuts_target_accept;
  nc.max_depth = config.nuts_max_depth;
  nc.seed = Rng::derive(config.seed, kStreamNuts);
  nc.init = config.nuts_init == "data" ? data_scaled_init(expr, gp.X(), gp.y())
                                       : Eigen::VectorXd::Zero(expr.slot_count());
  nc.init_jitter = config.nuts_init_jitter;
  nc.threads = config.threads;

  SamplerRun run = sample_nuts(target, nc, expr.slot_names());
  const ChainSelection sel = select_prediction_chain(run);

  SchemeOutput out;
  out.prediction_draws =
      equal_stride_thin(run.chains[static_cast<std::size_t>(sel.index)].draws,
                        config.predict_draws);
  out.diagnostics = summarize_draws(expr.slot_names(), run.draw_matrices());
  out.has_diagnostics = true;
  out.meta["kind"] = "nuts";
  out.meta["chains"] = config.nuts_chains;
  out.meta["warmup"] = config.nuts_warmup;
  out.meta["samples"] = config.nuts_samples;
  out.meta["target_accept"] = config.nuts_target_accept;
  out.meta["max_depth"] = config.nuts_max_depth;
  out.meta["init"] = config.nuts_init;
  out.meta["elapsed_seconds"] = run.elapsed_seconds;
  out.meta["selected_chain"] = sel.index;
  out.meta["selection"] = sel.rationale;
  ordered_json chain_info = ordered_json::array();
  for (const ChainResult& c : run.chains)
    chain_info.push_back({{"step_size", c.step_size},
                          {"mean_accept", c.mean_accept},
                          {"divergences", c.divergence_count},
                          {"healthy", c.healthy},
                          {"mean_lp", c.mean_lp()}});
  out.meta["chain_info"] = std::move(chain_info);
  out.chains = std::move(run.chains);
  return out;
}

SchemeOutput run_vi_scheme(const ExperimentConfig& config, const KernelExpr& expr,
                           const GpLogJointTarget& target, ViFamily family) {
  ViConfig vc;
  vc.family = family;
  vc.mc_samples = config.vi_mc_samples;
  vc.rate = config.vi_rate;
  vc.max_iters = config.vi_max_iters;
  vc.threshold = config.vi_threshold;
  vc.check_every = config.vi_check_every;
  vc.elbo_samples = config.vi_elbo_samples;
  vc.seed = Rng::derive(config.seed, kStreamVi);
  vc.threads = config.threads;

  const ViFit fit = fit_vi(target, vc);
  Eigen::MatrixXd draws =
      draw_vi_samples(fit.params, config.predict_draws, Rng::derive(config.seed, kStreamViDraws));
  const int m = static_cast<int>(draws.rows());
  Eigen::VectorXd lp(m);
  parallel_for(m, [&](int i) { lp[i] = target.value(draws.row(i).transpose()); },
               config.threads);

  ChainResult cr;
  cr.draws = draws;
  cr.lp = lp;
  cr.divergent.assign(static_cast<std::size_t>(m), 0);
  cr.tree_depth.assign(static_cast<std::size_t>(m), 0);

  SchemeOutput out;
  out.prediction_draws = std::move(draws);
  out.diagnostics = summarize_draws(expr.slot_names(), {cr.draws});
  out.has_diagnostics = true;
  out.chains.push_back(std::move(cr));
  out.meta["kind"] = config.scheme;
  out.meta["family"] = vi_family_name(family);
  out.meta["iterations"] = fit.iterations;
  out.meta["converged"] = fit.converged;
  out.meta["rate"] = fit.rate;
  out.meta["final_elbo"] = fit.final_elbo;
  out.meta["final_elbo_flagged"] = fit.final_elbo_flagged;
  out.meta["elapsed_seconds"] = fit.elapsed_seconds;

  ordered_json art;
  art["family"] = vi_family_name(family);
  art["iterations"] = fit.iterations;
  art["converged"] = fit.converged;
  art["rate"] = fit.rate;
  art["final_elbo"] = fit.final_elbo;
  const Eigen::VectorXd& mu =
      family == ViFamily::MeanField ? fit.params.mf.mu : fit.params.fr.mu;
  art["mu"] = std::vector<double>(mu.data(), mu.data() + mu.size());
  if (family == ViFamily::MeanField) {
    const Eigen::VectorXd sigma = fit.params.mf.sigma();
    art["nu"] = std::vector<double>(fit.params.mf.nu.data(),
                                    fit.params.mf.nu.data() + fit.params.mf.nu.size());
    art["sigma"] = std::vector<double>(sigma.data(), sigma.data() + sigma.size());
  } else {
    ordered_json rows = ordered_json::array();
    for (int r = 0; r < fit.params.fr.L.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(r) + 1);
      for (int c = 0; c <= r; ++c) row[static_cast<std::size_t>(c)] = fit.params.fr.L(r, c);
      rows.push_back(row);
    }
    art["l_factor"] = std::move(rows);
  }
  const int n_traj = static_cast<int>(fit.elbo_trajectory.size());
  const int stride = std::max(1, (n_traj + 499) / 500);
  std::vector<double> thinned;
  for (int i = 0; i < n_traj; i += stride) thinned.push_back(fit.elbo_trajectory[static_cast<std::size_t>(i)]);
  art["elbo"] = {{"stride", stride}, {"values", thinned}};
  out.vi_artifact = std::move(art);
  return out;
}

std::string metric_pair(double value, double se) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g (%.3g)", value, se);
  return buf;
}

std::string metric_one(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", value);
  return buf;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config) {
  validate_config(config);
  fs::create_directories(config.out_dir);
  DirectoryLock lock(config.out_dir);
  std::ostringstream notes;

  try {
    write_text_file(artifact_path(config, "config.txt"), config_echo(config));

    LoadReport report;
    const Dataset data =
        load_csv(config.data_path, config.data_target, &report, config.data_name);
    if (!report.rejected_rows.empty()) {
      notes << "rejected " << report.rejected_rows.size() << " malformed row(s) at line(s):";
      for (int r : report.rejected_rows) notes << " " << r;
      notes << "\n";
    }

    const SplitResult split = split_dataset(data, config.split);
    const bool standardize =
        config.standardize == "on" || (config.standardize == "auto" && data.dim() > 1);

    Eigen::MatrixXd x_train = split.x_train;
    Eigen::MatrixXd x_test = split.x_test;
    Eigen::VectorXd y_train = split.y_train;
    Standardizer scaler;
    if (standardize) {
      scaler = Standardizer::fit(split.x_train, split.y_train);
      x_train = scaler.apply_x(split.x_train);
      x_test = scaler.apply_x(split.x_test);
      y_train = scaler.apply_y(split.y_train);
    }

    KernelOptions kopts;
    kopts.share_product_amplitude = config.share_product_amplitude;
    kopts.sample_periods = config.sample_periods;
    kopts.period = config.kernel_period;
    const KernelExpr expr = parse_kernel_expr(config.kernel_expression, data.dim(), kopts);
    const GpWorkspace gp(expr, x_train, y_train);

    ordered_json meta;
    meta["scheme"] = config.scheme;
    meta["seed"] = config.seed;
    meta["dataset"] = {{"name", data.name},
                       {"path", config.data_path},
                       {"target", config.data_target},
                       {"n", data.n()},
                       {"d", data.dim()},
                       {"train", static_cast<int>(split.train_rows.size())},
                       {"test", static_cast<int>(split.test_rows.size())},
                       {"rejected_rows", report.rejected_rows}};
    meta["standardized"] = standardize;
    meta["kernel"] = {{"expression", expr.to_string()}, {"slots", expr.slot_names()}};

    ordered_json prior_meta;
    const PriorSpec prior = build_prior(config, expr, gp, &prior_meta);
    meta["prior"] = std::move(prior_meta);

    SchemeOutput scheme_out;
    if (config.scheme == "ml2") {
      scheme_out = run_ml2_scheme(config, gp);
    } else {
      const GpLogJointTarget target(expr, x_train, y_train, prior);
      if (config.scheme == "nuts")
        scheme_out = run_nuts_scheme(config, expr, gp, target);
      else
        scheme_out = run_vi_scheme(config, expr, target,
                                   config.scheme == "vi-meanfield" ? ViFamily::MeanField
                                                                   : ViFamily::FullRank);
    }

    MixtureBuild mb = build_mixture(expr, x_train, y_train, x_test,
                                    scheme_out.prediction_draws, config.full_cov);
    if (!mb.mixture.dropped.empty())
      notes << "dropped " << mb.mixture.dropped.size()
            << " mixture component(s) that failed to factor\n";
    if (standardize) {
      const double s = scaler.y_scale;
      mb.mixture.means = (mb.mixture.means.array() * s + scaler.y_mean).matrix();
      mb.mixture.vars *= s * s;
      mb.noise_vars *= s * s;
      for (Eigen::MatrixXd& c : mb.mixture.covs) c *= s * s;
    }

    const MixtureMoments moments = mixture_moments(mb.mixture);
    const QuantileBand band =
        empirical_quantiles(mb.mixture, config.quantile_samples, 2.5, 97.5,
                            Rng::derive(config.seed, kStreamQuantile));
    const RmseResult rm = rmse_metric(moments.mean, split.y_test);
    const Eigen::VectorXd nlpd_noise =
        config.include_noise_nlpd ? mb.noise_vars
                                  : Eigen::VectorXd::Zero(mb.mixture.components());
    const double nlpd = nlpd_metric(mb.mixture, split.y_test, nlpd_noise);

    write_text_file(artifact_path(config, "trace.csv"),
                    trace_csv(expr.slot_names(), scheme_out.chains));

    meta["sampler"] = std::move(scheme_out.meta);
    meta["mixture"] = {{"requested", static_cast<int>(scheme_out.prediction_draws.rows())},
                       {"components", mb.mixture.components()},
                       {"dropped", mb.mixture.dropped}};
    write_text_file(artifact_path(config, "trace_meta.json"), meta.dump(2) + "\n");

    std::ostringstream pred;
    pred << "x_index,mean,var,lower95,upper95\n";
    for (int i = 0; i < static_cast<int>(split.test_rows.size()); ++i)
      pred << csv_row({std::to_string(split.test_rows[static_cast<std::size_t>(i)]),
                       format_double(moments.mean[i]), format_double(moments.var[i]),
                       format_double(band.lower[i]), format_double(band.upper[i])});
    write_text_file(artifact_path(config, "predictions.csv"), pred.str());

    ordered_json metrics;
    metrics["rmse"] = rm.value;
    metrics["rmse_se"] = rm.se;
    metrics["nlpd"] = nlpd;
    metrics["M"] = mb.mixture.components();
    metrics["T"] = config.quantile_samples;
    write_text_file(artifact_path(config, "metrics.json"), metrics.dump(2) + "\n");

    if (scheme_out.has_diagnostics)
      write_text_file(artifact_path(config, "diagnostics.csv"),
                      summary_csv(scheme_out.diagnostics));
    if (!scheme_out.vi_artifact.is_null())
      write_text_file(artifact_path(config, "vi.json"), scheme_out.vi_artifact.dump(2) + "\n");

    RunResult result;
    result.out_dir = config.out_dir;
    result.scheme = config.scheme;
    result.rmse = rm.value;
    result.rmse_se = rm.se;
    result.nlpd = nlpd;
    result.components = mb.mixture.components();
    if (scheme_out.has_diagnostics) result.summary_text = render_summary(scheme_out.diagnostics);
    result.notes = notes.str();
    return result;
  } catch (const std::exception& e) {
    try {
      write_text_file(artifact_path(config, "FAILURE"), std::string(e.what()) + "\n");
    } catch (...) {
      // the original error is the one worth reporting
    }
    throw;
  }
}

namespace {

void require_same_experiment(const ExperimentConfig& ref, const std::string& ref_dir,
                             const ExperimentConfig& other, const std::string& other_dir) {
  if (other.data_path != ref.data_path || other.data_target != ref.data_target ||
      !(other.split == ref.split)) {
    std::ostringstream msg;
    msg << "bundle " << other_dir << " was produced from a different dataset or split than "
        << ref_dir;
    throw std::runtime_error(msg.str());
  }
}

}  // namespace

Comparison compare_schemes(const std::vector<std::string>& bundle_dirs) {
  if (bundle_dirs.empty()) throw std::invalid_argument("compare needs at least one bundle");

  Comparison comp;
  std::ostringstream csv;
  csv << "scheme,rmse,rmse_se,nlpd,seed,bundle\n";
  std::vector<std::vector<std::string>> text_rows;

  ExperimentConfig ref;
  std::string ref_dir;
  bool have_ref = false;
  for (const std::string& dir : bundle_dirs) {
    const ExperimentConfig cfg =
        parse_config_text(read_text_file((fs::path(dir) / "config.txt").string()));
    const nlohmann::json metrics =
        nlohmann::json::parse(read_text_file((fs::path(dir) / "metrics.json").string()));
    if (!have_ref) {
      ref = cfg;
      ref_dir = dir;
      have_ref = true;
    } else {
      require_same_experiment(ref, ref_dir, cfg, dir);
    }

    ComparisonRow row;
    row.scheme = cfg.scheme;
    row.rmse = metrics.at("rmse").get<double>();
    row.rmse_se = metrics.at("rmse_se").get<double>();
    row.nlpd = metrics.at("nlpd").get<double>();
    row.seed = cfg.seed;
    row.bundle = dir;
    csv << csv_row({row.scheme, format_double(row.rmse), format_double(row.rmse_se),
                    format_double(row.nlpd), std::to_string(row.seed), row.bundle});
    text_rows.push_back({row.scheme, metric_pair(row.rmse, row.rmse_se), metric_one(row.nlpd),
                         std::to_string(row.seed)});
    comp.rows.push_back(std::move(row));
  }
  comp.csv = csv.str();
  comp.text = render_table({"scheme", "rmse (se)", "nlpd", "seed"}, text_rows);
  return comp;
}

std::string plot_data_csv(const std::string& bundle_dir) {
  std::vector<fs::path> runs;
  const fs::path root(bundle_dir);
  if (fs::exists(root / "config.txt")) {
    runs.push_back(root);
  } else if (fs::is_directory(root)) {
    for (const auto& entry : fs::directory_iterator(root))
      if (entry.is_directory() && fs::exists(entry.path() / "config.txt") &&
          fs::exists(entry.path() / "predictions.csv"))
        runs.push_back(entry.path());
    std::sort(runs.begin(), runs.end());
  }
  if (runs.empty())
    throw std::runtime_error("no completed runs found in " + bundle_dir);

  std::ostringstream out;
  out << "x,observed,mean,lower95,upper95,scheme\n";

  ExperimentConfig ref;
  std::string ref_dir;
  bool have_ref = false;
  Dataset data;
  for (const fs::path& run : runs) {
    const ExperimentConfig cfg =
        parse_config_text(read_text_file((run / "config.txt").string()));
    if (!have_ref) {
      ref = cfg;
      ref_dir = run.string();
      have_ref = true;
      data = load_csv(cfg.data_path, cfg.data_target, nullptr, cfg.data_name);
      if (data.dim() != 1) {
        std::ostringstream msg;
        msg << "plot data is only defined for 1-d inputs; " << data.name << " has d = "
            << data.dim();
        throw std::runtime_error(msg.str());
      }
    } else {
      require_same_experiment(ref, ref_dir, cfg, run.string());
    }

    const CsvTable preds = read_csv_file((run / "predictions.csv").string());
    const int cx = preds.column("x_index");
    const int cm = preds.column("mean");
    const int cl = preds.column("lower95");
    const int cu = preds.column("upper95");
    if (cx < 0 || cm < 0 || cl < 0 || cu < 0)
      throw std::runtime_error("malformed predictions.csv in " + run.string());
    for (const auto& cells : preds.rows) {
      const int idx = std::stoi(cells[static_cast<std::size_t>(cx)]);
      if (idx < 0 || idx >= data.n())
        throw std::runtime_error("prediction row index out of range in " + run.string());
      out << csv_row({format_double(data.X(idx, 0)), format_double(data.y[idx]),
                      cells[static_cast<std::size_t>(cm)], cells[static_cast<std::size_t>(cl)],
                      cells[static_cast<std::size_t>(cu)], cfg.scheme});
    }
  }
  return out.str();
}

}  // namespace fbgpr
