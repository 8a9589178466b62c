#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <unistd.h>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbgpr/experiment.hpp"
#include "fbgpr/rng.hpp"

using namespace fbgpr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("fbgpr_exp_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

// Small smooth 1-d dataset, written fresh so the suite needs no checked-in data.
std::string write_wave_csv(const TempDir& dir, int n = 48) {
  const std::string path = dir / "wave.csv";
  std::ofstream out(path);
  out << "t,y\n";
  Rng rng(99);
  for (int i = 0; i < n; ++i) {
    const double t = 0.25 * i;
    out << t << "," << (std::sin(t) + 0.05 * t + rng.normal(0.0, 0.1)) << "\n";
  }
  return path;
}

ExperimentConfig wave_config(const TempDir& dir, const std::string& csv) {
  ExperimentConfig c;
  c.data_path = csv;
  c.data_target = "y";
  c.data_name = "wave";
  c.kernel_expression = "SE + Noise";
  c.split.kind = SplitSpec::Kind::FirstK;
  c.split.k = 36;
  c.scheme = "ml2";
  c.ml2_restarts = 2;
  c.seed = 3;
  c.out_dir = dir / "run_ml2";
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("ml2 run produces a complete scored bundle") {
  TempDir dir;
  const std::string csv = write_wave_csv(dir);
  ExperimentConfig c = wave_config(dir, csv);

  const RunResult r = run_experiment(c);
  CHECK(r.scheme == "ml2");
  CHECK(r.components == 1);
  CHECK(r.rmse > 0.0);
  CHECK(r.rmse < 1.0);  // the wave extrapolates decently over 3 time units
  CHECK(std::isfinite(r.nlpd));

  for (const char* leaf :
       {"config.txt", "trace.csv", "trace_meta.json", "predictions.csv", "metrics.json"}) {
    CAPTURE(leaf);
    CHECK(fs::exists(fs::path(c.out_dir) / leaf));
  }
  CHECK_FALSE(fs::exists(fs::path(c.out_dir) / "FAILURE"));

  // metrics carry exactly the documented keys
  const auto metrics = nlohmann::json::parse(slurp((fs::path(c.out_dir) / "metrics.json").string()));
  REQUIRE(metrics.is_object());
  CHECK(metrics.size() == 5);
  for (const char* key : {"rmse", "rmse_se", "nlpd", "M", "T"}) {
    CAPTURE(key);
    CHECK(metrics.contains(key));
  }
  CHECK(metrics["M"].get<int>() == 1);
  CHECK(metrics["rmse"].get<double>() == doctest::Approx(r.rmse));

  // trace has exactly one draw: header plus one row
  std::istringstream trace(slurp((fs::path(c.out_dir) / "trace.csv").string()));
  std::string line;
  int rows = 0;
  while (std::getline(trace, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);

  // config echo reparses to the run's own settings
  const ExperimentConfig echoed = parse_config_text(slurp((fs::path(c.out_dir) / "config.txt").string()));
  CHECK(echoed.kernel_expression == c.kernel_expression);
  CHECK(echoed.split.k == c.split.k);
  CHECK(echoed.seed == c.seed);
}

TEST_CASE("reruns with the same config and seed are byte identical") {
  TempDir dir;
  const std::string csv = write_wave_csv(dir);
  ExperimentConfig c = wave_config(dir, csv);
  run_experiment(c);
  const std::string first = slurp((fs::path(c.out_dir) / "metrics.json").string());
  const std::string first_trace = slurp((fs::path(c.out_dir) / "trace.csv").string());

  ExperimentConfig again = c;
  again.out_dir = dir / "run_ml2_again";
  run_experiment(again);
  CHECK(slurp((fs::path(again.out_dir) / "metrics.json").string()) == first);
  CHECK(slurp((fs::path(again.out_dir) / "trace.csv").string()) == first_trace);
}

TEST_CASE("failures leave a marker and propagate") {
  TempDir dir;
  const std::string csv = write_wave_csv(dir);
  ExperimentConfig c = wave_config(dir, csv);
  c.kernel_expression = "SE[3] + Noise";  // column out of range for 1-d data
  c.out_dir = dir / "run_bad";

  CHECK_THROWS(run_experiment(c));
  CHECK(fs::exists(fs::path(c.out_dir) / "FAILURE"));
  const std::string marker = slurp((fs::path(c.out_dir) / "FAILURE").string());
  CHECK_FALSE(marker.empty());
}

TEST_CASE("the output directory lock rejects a second writer") {
  TempDir dir;
  const std::string csv = write_wave_csv(dir);
  ExperimentConfig c = wave_config(dir, csv);
  c.out_dir = dir / "locked";
  fs::create_directories(c.out_dir);
  {
    std::ofstream lock(fs::path(c.out_dir) / ".lock");
    lock << "held by another process\n";
  }
  CHECK_THROWS_AS(run_experiment(c), std::runtime_error);
  fs::remove(fs::path(c.out_dir) / ".lock");
  run_experiment(c);  // released lock clears the way
  CHECK(fs::exists(fs::path(c.out_dir) / "metrics.json"));
}

TEST_CASE("compare joins bundles that share a split and rejects those that do not") {
  TempDir dir;
  const std::string csv = write_wave_csv(dir);
  ExperimentConfig a = wave_config(dir, csv);
  a.out_dir = dir / "cmp_a";
  run_experiment(a);

  ExperimentConfig b = a;
  b.scheme = "vi-meanfield";
  b.vi_max_iters = 400;
  b.predict_draws = 20;
  b.out_dir = dir / "cmp_b";
  b.seed = 4;  // different seed is allowed and recorded
  run_experiment(b);

  const Comparison cmp = compare_schemes({a.out_dir, b.out_dir});
  REQUIRE(cmp.rows.size() == 2);
  CHECK(cmp.rows[0].scheme == "ml2");
  CHECK(cmp.rows[1].scheme == "vi-meanfield");
  CHECK(cmp.rows[0].seed == 3);
  CHECK(cmp.rows[1].seed == 4);
  CHECK(cmp.csv.find("rmse") != std::string::npos);
  CHECK(cmp.text.find("vi-meanfield") != std::string::npos);

  // different split: k changes
  ExperimentConfig off = a;
  off.split.k = 30;
  off.out_dir = dir / "cmp_off";
  run_experiment(off);
  CHECK_THROWS_WITH_AS(compare_schemes({a.out_dir, off.out_dir}),
                       doctest::Contains("cmp_off"), std::runtime_error);
}

TEST_CASE("plot data covers every scheme in the bundle with ordered bounds") {
  TempDir dir;
  const std::string csv = write_wave_csv(dir);
  ExperimentConfig a = wave_config(dir, csv);
  a.out_dir = dir / "plot_parent/run_a";
  fs::create_directories(dir / "plot_parent");
  run_experiment(a);

  const std::string long_csv = plot_data_csv(dir / "plot_parent");
  std::istringstream in(long_csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "x,observed,mean,lower95,upper95,scheme");
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 6);
    CHECK(std::stod(cells[3]) <= std::stod(cells[4]));
    CHECK(cells[5] == "ml2");
  }
  CHECK(rows == 12);  // 48 - 36 test points, one scheme

  CHECK_THROWS(plot_data_csv(dir / "does_not_exist"));
}

}
