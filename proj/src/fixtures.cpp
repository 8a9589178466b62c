#include "fbgpr/fixtures.hpp"

#include <filesystem>
#include <sstream>

#include <Eigen/Dense>

#include "fbgpr/gp.hpp"
#include "fbgpr/io.hpp"
#include "fbgpr/kernel.hpp"
#include "fbgpr/rng.hpp"

namespace fbgpr {

namespace {

// Monthly international airline passengers, Jan 1949 - Dec 1960, thousands.
constexpr int kAirline[144] = {
    112, 118, 132, 129, 121, 135, 148, 148, 136, 119, 104, 118,  //
    115, 126, 141, 135, 125, 149, 170, 170, 158, 133, 114, 140,  //
    145, 150, 178, 163, 172, 178, 199, 199, 184, 162, 146, 166,  //
    171, 180, 193, 181, 183, 218, 230, 242, 209, 191, 172, 194,  //
    196, 196, 236, 235, 229, 243, 264, 272, 237, 211, 180, 201,  //
    204, 188, 235, 227, 234, 264, 302, 293, 259, 229, 203, 229,  //
    242, 233, 267, 269, 270, 315, 364, 347, 312, 274, 237, 278,  //
    284, 277, 317, 313, 318, 374, 413, 405, 355, 306, 271, 306,  //
    315, 301, 356, 348, 355, 422, 465, 467, 404, 347, 305, 336,  //
    340, 318, 362, 348, 363, 435, 491, 505, 404, 359, 310, 337,  //
    360, 342, 406, 396, 420, 472, 548, 559, 463, 407, 362, 405,  //
    417, 391, 419, 461, 472, 535, 622, 606, 508, 461, 390, 432};

// Draws y ~ N(0, K(theta)) over X, observation noise included through the
// kernel's Noise summand.
Eigen::VectorXd sample_from_kernel(const std::string& expression, const Eigen::VectorXd& theta,
                                   const Eigen::MatrixXd& X, std::uint64_t seed,
                                   const KernelOptions& options = {}) {
  const KernelExpr expr =
      parse_kernel_expr(expression, static_cast<int>(X.cols()), options);
  const Eigen::MatrixXd K =
      eval_kernel_matrix(expr, ThetaVector::from_theta(theta), X);
  const CholeskyFactor chol = cholesky_with_jitter(K);
  Rng rng(seed);
  return chol.L * rng.normal_vector(static_cast<int>(X.rows()));
}

std::string to_csv(const std::vector<std::string>& columns, const Eigen::MatrixXd& X,
                   const std::string& target, const Eigen::VectorXd& y) {
  std::ostringstream out;
  std::vector<std::string> header = columns;
  header.push_back(target);
  out << csv_row(header);
  std::vector<std::string> cells(header.size());
  for (int i = 0; i < X.rows(); ++i) {
    for (int c = 0; c < X.cols(); ++c)
      cells[static_cast<std::size_t>(c)] = format_double(X(i, c));
    cells.back() = format_double(y[i]);
    out << csv_row(cells);
  }
  return out.str();
}

}  // namespace

std::string airline_csv() {
  std::ostringstream out;
  out << "year,passengers\n";
  for (int i = 0; i < 144; ++i)
    out << format_double(1949.0 + i / 12.0) << "," << kAirline[i] << "\n";
  return out.str();
}

std::string seasonal_csv() {
  const int n = 732;
  Eigen::MatrixXd x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = i / 12.0;  // monthly over 61 years

  // Long trend + quasi-periodic yearly cycle + medium-term wobble + short
  // variation + noise; scales chosen so the components live on clearly
  // separated length- and amplitude-scales.
  Eigen::VectorXd theta(11);
  theta << 224.758, 103.291,  // trend amplitude, lengthscale
      3.315, 97.31, 0.802,    // seasonal amplitude, decay lengthscale, cycle width
      1.169, 1.775, 0.121,    // mid-term amplitude, lengthscale, mixture shape
      0.155, 0.115,           // short-term amplitude, lengthscale
      0.192;                  // observation noise
  const Eigen::VectorXd y =
      sample_from_kernel("SE + SE*Per + RQ + SE + Noise", theta, x, 0x5345415331ull);
  return to_csv({"time"}, x, "level", y);
}

std::string tabular_csv() {
  const int n = 1599, d = 11;
  Rng rng(0x54414231ull);
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i) x.row(i) = rng.normal_vector(d).transpose();

  // Three effective inputs; the remaining lengthscales are long enough to
  // make those columns nearly irrelevant, mimicking tabular data where a
  // few features carry the signal.
  Eigen::VectorXd theta(13);
  theta << 0.35,                                      // amplitude
      1.5, 2.0, 2.5, 20, 20, 20, 20, 20, 20, 20, 20,  // per-dimension lengthscales
      0.62;                                           // observation noise
  const Eigen::VectorXd y = sample_from_kernel("ARD + Noise", theta, x, 0x544142ull);
  std::vector<std::string> cols;
  for (int c = 1; c <= d; ++c) cols.push_back("f" + std::to_string(c));
  return to_csv(cols, x, "target", y);
}

std::string blend_csv() {
  const int n = 1030, d = 8;
  Rng rng(0x424c454e44ull);
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i) x.row(i) = rng.normal_vector(d).transpose();

  Eigen::VectorXd theta(10);
  theta << 0.4,                          // amplitude
      1.2, 1.8, 15, 15, 15, 15, 15, 15,  // per-dimension lengthscales
      0.55;                              // observation noise
  const Eigen::VectorXd y = sample_from_kernel("ARD + Noise", theta, x, 0x424c44ull);
  std::vector<std::string> cols;
  for (int c = 1; c <= d; ++c) cols.push_back("f" + std::to_string(c));
  return to_csv(cols, x, "target", y);
}

std::string toy_csv() {
  const int n = 40;
  Eigen::MatrixXd x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = i * 0.25;

  Eigen::VectorXd theta(3);
  theta << 1.0, 0.7, 0.15;  // amplitude, lengthscale, noise
  const Eigen::VectorXd y = sample_from_kernel("SE + Noise", theta, x, 0x544f59ull);
  return to_csv({"x"}, x, "y", y);
}

std::vector<std::string> write_fixtures(const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::vector<std::pair<std::string, std::string (*)()>> fixtures = {
      {"airline.csv", airline_csv}, {"seasonal.csv", seasonal_csv},
      {"tabular.csv", tabular_csv}, {"blend.csv", blend_csv},
      {"toy.csv", toy_csv}};
  std::vector<std::string> paths;
  for (const auto& [name, fn] : fixtures) {
    const std::string path = (fs::path(dir) / name).string();
    write_text_file(path, fn());
    paths.push_back(path);
  }
  return paths;
}

}  // namespace fbgpr
