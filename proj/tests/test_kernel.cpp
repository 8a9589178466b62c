#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <fbgpr/kernel.hpp>
#include <fbgpr/rng.hpp>
#include <stdexcept>

using namespace fbgpr;

namespace {

Eigen::MatrixXd grid1d(int n, double step) {
  Eigen::MatrixXd X(n, 1);
  for (int i = 0; i < n; ++i) X(i, 0) = i * step;
  return X;
}

// Central finite difference of a single kernel entry w.r.t. eta[slot].
double fd_entry(const KernelExpr& expr, const Eigen::VectorXd& eta, int slot,
                const Eigen::MatrixXd& X, int i, int j) {
  const double h = 1e-5;
  Eigen::VectorXd lo = eta, hi = eta;
  lo[slot] -= h;
  hi[slot] += h;
  const double f_hi = eval_kernel_matrix(expr, ThetaVector(hi), X)(i, j);
  const double f_lo = eval_kernel_matrix(expr, ThetaVector(lo), X)(i, j);
  return (f_hi - f_lo) / (2.0 * h);
}

} // namespace

TEST_SUITE("kernel") {

TEST_CASE("squared-exponential closed form") {
  // unit amplitude and lengthscale, |r| = sqrt(2): k = exp(-1)
  KernelExpr expr = parse_kernel_expr("SE", 2);
  Eigen::MatrixXd X(2, 2);
  X << 0.0, 0.0, 1.0, 1.0;
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(2);
  const Eigen::MatrixXd K = eval_kernel_matrix(expr, ThetaVector(eta), X);
  CHECK(K(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(K(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(K(1, 0) == K(0, 1));
}

TEST_CASE("amplitude slots are standard deviations") {
  KernelExpr expr = parse_kernel_expr("SE", 1);
  Eigen::MatrixXd X = grid1d(1, 1.0);
  Eigen::VectorXd eta(2);
  eta << std::log(3.0), 0.0;
  const Eigen::MatrixXd K = eval_kernel_matrix(expr, ThetaVector(eta), X);
  CHECK(K(0, 0) == doctest::Approx(9.0).epsilon(1e-12));
}

TEST_CASE("rational quadratic closed form and SE limit") {
  KernelExpr expr = parse_kernel_expr("RQ", 1);
  Eigen::MatrixXd X = grid1d(2, 1.0);
  // s=1, ls=1, alpha=2: k = (1 + r^2/(2*2))^-2 = (1.25)^-2
  Eigen::VectorXd eta(3);
  eta << 0.0, 0.0, std::log(2.0);
  const Eigen::MatrixXd K = eval_kernel_matrix(expr, ThetaVector(eta), X);
  CHECK(K(0, 1) == doctest::Approx(std::pow(1.25, -2.0)).epsilon(1e-12));
  // alpha -> inf approaches the squared exponential
  eta[2] = std::log(1e7);
  const double k_big = eval_kernel_matrix(expr, ThetaVector(eta), X)(0, 1);
  CHECK(k_big == doctest::Approx(std::exp(-0.5)).epsilon(1e-6));
}

TEST_CASE("periodic kernel closed form") {
  KernelOptions opts;
  opts.period = 2.0;
  KernelExpr expr = parse_kernel_expr("Per", 1, opts);
  REQUIRE(expr.slot_count() == 2); // pinned period: amplitude + lengthscale
  Eigen::MatrixXd X = grid1d(2, 0.5);
  Eigen::VectorXd eta(2);
  eta << 0.0, std::log(0.8);
  // k = exp(-2 sin^2(pi * 0.5 / 2) / 0.8^2)
  const double expect =
      std::exp(-2.0 * std::pow(std::sin(M_PI * 0.25), 2) / 0.64);
  const Eigen::MatrixXd K = eval_kernel_matrix(expr, ThetaVector(eta), X);
  CHECK(K(0, 1) == doctest::Approx(expect).epsilon(1e-12));
  // exactly one period apart: correlation 1
  Eigen::MatrixXd X2(2, 1);
  X2 << 0.0, 2.0;
  const Eigen::MatrixXd K2 = eval_kernel_matrix(expr, ThetaVector(eta), X2);
  CHECK(K2(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sampled period adds a slot") {
  KernelOptions opts;
  opts.sample_periods = true;
  KernelExpr expr = parse_kernel_expr("Per", 1, opts);
  CHECK(expr.slot_count() == 3);
  CHECK(expr.slot_roles()[2] == SlotRole::Period);
}

TEST_CASE("noise leaf is diagonal only") {
  KernelExpr expr = parse_kernel_expr("Noise", 1);
  Eigen::MatrixXd X = grid1d(3, 0.1);
  Eigen::VectorXd eta(1);
  eta << std::log(0.5);
  const Eigen::MatrixXd K = eval_kernel_matrix(expr, ThetaVector(eta), X);
  CHECK(K(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(K(0, 1) == 0.0);
  CHECK(K(2, 1) == 0.0);
}

TEST_CASE("noise vanishes off-diagonal in cross evaluation") {
  KernelExpr expr = parse_kernel_expr("SE + Noise", 1);
  Eigen::MatrixXd A = grid1d(3, 0.5);
  Eigen::MatrixXd B = grid1d(2, 0.7);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(3);
  const Eigen::MatrixXd Kab =
      eval_cross_matrix(expr, ThetaVector(eta), A, B);
  // A(0) == B(0) == 0, but cross noise still contributes nothing
  CHECK(Kab(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sum and product combine pointwise") {
  Eigen::MatrixXd X = grid1d(4, 0.3);
  Eigen::VectorXd eta_se = Eigen::VectorXd::Zero(2);
  const Eigen::MatrixXd K_se =
      eval_kernel_matrix(parse_kernel_expr("SE", 1), ThetaVector(eta_se), X);

  KernelExpr sum = parse_kernel_expr("SE + SE", 1);
  const Eigen::MatrixXd K_sum =
      eval_kernel_matrix(sum, ThetaVector(Eigen::VectorXd::Zero(4)), X);
  CHECK((K_sum - 2.0 * K_se).norm() == doctest::Approx(0.0).epsilon(1e-12));

  // shared amplitude: right factor has no amplitude slot
  KernelExpr prod = parse_kernel_expr("SE * SE", 1);
  REQUIRE(prod.slot_count() == 3);
  const Eigen::MatrixXd K_prod =
      eval_kernel_matrix(prod, ThetaVector(Eigen::VectorXd::Zero(3)), X);
  CHECK((K_prod - K_se.cwiseProduct(K_se)).norm() ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("slot bookkeeping for composite expressions") {
  // seasonal composite: 2 + 2 + 3 + 2 + 1 with product sharing = 11 slots
  KernelExpr co2 = parse_kernel_expr("SE + SE*Per + RQ + SE + Noise", 1);
  CHECK(co2.slot_count() == 11);
  const auto& names = co2.slot_names();
  REQUIRE(names.size() == 11);
  CHECK(names[0] == "s_1");
  CHECK(names[1] == "ls_2");
  CHECK(names[2] == "s_3");
  CHECK(names[3] == "ls_4");
  CHECK(names[4] == "ls_5");
  CHECK(names[5] == "s_6");
  CHECK(names[6] == "ls_7");
  CHECK(names[7] == "alpha_8");
  CHECK(names[8] == "s_9");
  CHECK(names[9] == "ls_10");
  CHECK(names[10] == "n_11");

  KernelExpr airline = parse_kernel_expr("SE*Per + SE + Noise", 1);
  CHECK(airline.slot_count() == 6);

  KernelExpr ard = parse_kernel_expr("ARD + Noise", 11);
  CHECK(ard.slot_count() == 13);
}

TEST_CASE("naive product counting is available when sharing is off") {
  KernelOptions opts;
  opts.share_product_amplitude = false;
  KernelExpr prod = parse_kernel_expr("SE * SE", 1, opts);
  CHECK(prod.slot_count() == 4);
}

TEST_CASE("column restriction selects the axis") {
  KernelExpr expr = parse_kernel_expr("SE[1]", 3);
  Eigen::MatrixXd X(2, 3);
  X << 0.0, 0.0, 0.0,
       9.0, 1.0, 9.0;                 // only column 1 matters
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(2);
  const Eigen::MatrixXd K = eval_kernel_matrix(expr, ThetaVector(eta), X);
  CHECK(K(0, 1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("parser rejects malformed expressions") {
  CHECK_THROWS_AS(parse_kernel_expr("SE +", 1), std::invalid_argument);
  CHECK_THROWS_AS(parse_kernel_expr("(SE", 1), std::invalid_argument);
  CHECK_THROWS_AS(parse_kernel_expr("BOGUS", 1), std::invalid_argument);
  CHECK_THROWS_AS(parse_kernel_expr("", 1), std::invalid_argument);
  CHECK_THROWS_AS(parse_kernel_expr("SE[5]", 2), std::invalid_argument);
  CHECK_THROWS_AS(parse_kernel_expr("SE SE", 1), std::invalid_argument);
}

TEST_CASE("parser accepts parentheses and reports structure") {
  KernelExpr expr = parse_kernel_expr("(SE + RQ) * Per", 1);
  // shared amplitude drops Per's amplitude: 2 + 3 + 1 = 6
  CHECK(expr.slot_count() == 6);
  CHECK(expr.to_string().find("Per") != std::string::npos);
}

TEST_CASE("gradients match finite differences") {
  Rng rng(99);
  auto check_expr = [&](const char* text, int dim) {
    Eigen::MatrixXd X(5, dim);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < dim; ++j) X(i, j) = rng.normal();
    KernelExpr expr = parse_kernel_expr(text, dim);
    Eigen::VectorXd eta(expr.slot_count());
    for (int s = 0; s < eta.size(); ++s) eta[s] = 0.1 * (s + 1) - 0.3;
    KernelEvaluator ev(expr, X);
    ThetaVector th(eta);
    ev.for_each_grad(th, [&](int slot, const Eigen::MatrixXd& G) {
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          const double fd = fd_entry(expr, eta, slot, X, i, j);
          const double scale = std::max({1.0, std::abs(fd), std::abs(G(i, j))});
          CHECK(std::abs(G(i, j) - fd) / scale < 1e-6);
        }
      }
    });
  };
  check_expr("SE", 2);
  check_expr("RQ", 2);
  check_expr("ARD + Noise", 2);
  check_expr("SE*Per + SE + Noise", 1);
  check_expr("(SE + RQ) * Per", 1);
  check_expr("SE[0] * Per[1]", 2);
}

TEST_CASE("kernel matrices are positive semidefinite") {
  Rng rng(7);
  auto check_expr = [&](const char* text, int dim) {
    Eigen::MatrixXd X(12, dim);
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < dim; ++j) X(i, j) = rng.normal();
    KernelExpr expr = parse_kernel_expr(text, dim);
    Eigen::VectorXd eta = Eigen::VectorXd::Constant(expr.slot_count(), -0.2);
    const Eigen::MatrixXd K = eval_kernel_matrix(expr, ThetaVector(eta), X);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
    CHECK(es.eigenvalues().minCoeff() > -1e-9);
  };
  check_expr("SE + Noise", 2);
  check_expr("SE*Per + SE + Noise", 1);
  check_expr("RQ + ARD", 2);
}

TEST_CASE("stationary diagonal matches the full matrix") {
  KernelExpr expr = parse_kernel_expr("SE*Per + SE + Noise", 1);
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(6, 0.3);
  Eigen::MatrixXd X = grid1d(4, 0.7);
  const Eigen::MatrixXd K = eval_kernel_matrix(expr, ThetaVector(eta), X);
  const Eigen::VectorXd diag = eval_kernel_diag(expr, ThetaVector(eta), 4);
  CHECK((K.diagonal() - diag).norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("excluded noise leaves drop out of the diagonal") {
  KernelExpr expr = parse_kernel_expr("SE + Noise", 1);
  const auto noise_leaves = expr.top_level_noise_leaves();
  REQUIRE(noise_leaves.size() == 1);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(3);
  const Eigen::VectorXd with_noise = eval_kernel_diag(expr, ThetaVector(eta), 2);
  const Eigen::VectorXd without =
      eval_kernel_diag(expr, ThetaVector(eta), 2, noise_leaves);
  CHECK(with_noise[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(without[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("theta and eta views stay consistent") {
  Eigen::VectorXd eta(3);
  eta << -1.0, 0.0, 2.5;
  ThetaVector th(eta);
  CHECK(th.theta(0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  ThetaVector back = ThetaVector::from_theta(th.theta());
  CHECK((back.eta() - eta).norm() == doctest::Approx(0.0).epsilon(1e-12));
}

} // TEST_SUITE
