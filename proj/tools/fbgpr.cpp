#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "fbgpr/config.hpp"
#include "fbgpr/diagnostics.hpp"
#include "fbgpr/experiment.hpp"
#include "fbgpr/fixtures.hpp"
#include "fbgpr/io.hpp"
#include "fbgpr/trace.hpp"

namespace {

int do_run(const std::string& config_path, const std::string& scheme, bool have_seed,
           std::uint64_t seed, const std::string& out, const std::vector<std::string>& sets) {
  fbgpr::ExperimentConfig config = fbgpr::load_config_file(config_path);
  if (!scheme.empty()) fbgpr::set_config_value(config, "scheme.name", scheme);
  if (have_seed) config.seed = seed;
  if (!out.empty()) config.out_dir = out;
  for (const std::string& assignment : sets) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects section.key=value, got: " + assignment);
    fbgpr::set_config_value(config, assignment.substr(0, eq), assignment.substr(eq + 1));
  }

  const fbgpr::RunResult res = fbgpr::run_experiment(config);
  if (!res.notes.empty()) std::cerr << res.notes;
  if (!res.summary_text.empty()) std::cout << res.summary_text << "\n";
  std::cout << res.scheme << ": rmse " << res.rmse << " (se " << res.rmse_se << "), nlpd "
            << res.nlpd << ", mixture components " << res.components << "\n"
            << "artifacts in " << res.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fully Bayesian Gaussian process regression"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run one experiment from a config file");
  std::string config_path, run_scheme, run_out;
  std::uint64_t run_seed = 0;
  std::vector<std::string> run_sets;
  run->add_option("--config", config_path, "Experiment config file")->required();
  run->add_option("--scheme", run_scheme, "Override scheme.name");
  run->add_option("--seed", run_seed, "Override run.seed");
  run->add_option("--out", run_out, "Override run.out");
  run->add_option("--set", run_sets, "Override any key as section.key=value (repeatable)");

  auto* cmp = app.add_subcommand("compare", "Metrics table across run directories");
  std::vector<std::string> cmp_bundles;
  std::string cmp_csv;
  cmp->add_option("bundles", cmp_bundles, "Run output directories")->required();
  cmp->add_option("--csv", cmp_csv, "Also write the table as CSV to this file");

  auto* plot = app.add_subcommand("plotdata", "Long-format prediction CSV for plotting");
  std::string plot_bundle, plot_out;
  plot->add_option("bundle", plot_bundle, "Run directory or directory of runs")->required();
  plot->add_option("--out", plot_out, "Write to a file instead of stdout");

  auto* summ = app.add_subcommand("summarize", "Posterior summary table from a trace CSV");
  std::string trace_path;
  summ->add_option("trace", trace_path, "trace.csv produced by a run")->required();

  auto* fix = app.add_subcommand("fixtures", "Write the built-in datasets");
  std::string fix_out = "fixtures";
  fix->add_option("--out", fix_out, "Target directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return do_run(config_path, run_scheme, run->count("--seed") > 0, run_seed, run_out,
                    run_sets);
    if (cmp->parsed()) {
      const fbgpr::Comparison comp = fbgpr::compare_schemes(cmp_bundles);
      std::cout << comp.text << "\n";
      if (!cmp_csv.empty()) fbgpr::write_text_file(cmp_csv, comp.csv);
      return 0;
    }
    if (plot->parsed()) {
      const std::string csv = fbgpr::plot_data_csv(plot_bundle);
      if (plot_out.empty())
        std::cout << csv;
      else
        fbgpr::write_text_file(plot_out, csv);
      return 0;
    }
    if (summ->parsed()) {
      const fbgpr::ParsedTrace trace = fbgpr::parse_trace_csv(fbgpr::read_text_file(trace_path));
      std::vector<Eigen::MatrixXd> mats;
      for (const auto& chain : trace.chains) mats.push_back(chain.draws);
      std::cout << fbgpr::render_summary(fbgpr::summarize_draws(trace.slot_names, mats)) << "\n";
      return 0;
    }
    if (fix->parsed()) {
      for (const std::string& path : fbgpr::write_fixtures(fix_out))
        std::cout << path << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
