#include <doctest.h>

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>

#include "fbgpr/gp.hpp"
#include "fbgpr/kernel.hpp"
#include "fbgpr/mixture.hpp"

using namespace fbgpr;

namespace {

PredictiveMixture two_component(double m0, double m1, double v0, double v1) {
  PredictiveMixture mix;
  mix.means.resize(2, 1);
  mix.means << m0, m1;
  mix.vars.resize(2, 1);
  mix.vars << v0, v1;
  return mix;
}

}  // namespace

TEST_SUITE("mixture") {

TEST_CASE("moments obey the law of total variance") {
  // components N(+1, 0.5) and N(-1, 1.5): mean 0, var = 1.0 + 1.0
  const PredictiveMixture mix = two_component(1.0, -1.0, 0.5, 1.5);
  const MixtureMoments mom = mixture_moments(mix);
  CHECK(mom.mean[0] == doctest::Approx(0.0));
  CHECK(mom.var[0] == doctest::Approx(2.0));
}

TEST_CASE("single component moments are the component") {
  PredictiveMixture mix;
  mix.means.resize(1, 3);
  mix.means << 2.0, -3.0, 0.5;
  mix.vars.resize(1, 3);
  mix.vars << 0.25, 1.0, 4.0;
  const MixtureMoments mom = mixture_moments(mix);
  for (int i = 0; i < 3; ++i) {
    CHECK(mom.mean[i] == mix.means(0, i));
    CHECK(mom.var[i] == doctest::Approx(mix.vars(0, i)));
  }
}

TEST_CASE("rmse and its delta-method standard error") {
  Eigen::VectorXd pred(2), actual(2);
  pred << 3.0, 4.0;
  actual << 0.0, 0.0;
  const RmseResult r = rmse_metric(pred, actual);
  CHECK(r.value == doctest::Approx(std::sqrt(12.5)));
  // squared errors {9, 16}: sd = sqrt(24.5); se = sd / (2 rmse sqrt(2))
  CHECK(r.se == doctest::Approx(std::sqrt(24.5) / (2.0 * std::sqrt(12.5) * std::sqrt(2.0))));
}

TEST_CASE("perfect prediction has zero rmse and zero se") {
  Eigen::VectorXd v(3);
  v << 1.0, 2.0, 3.0;
  const RmseResult r = rmse_metric(v, v);
  CHECK(r.value == 0.0);
  CHECK(r.se == 0.0);
}

TEST_CASE("nlpd hand values") {
  Eigen::VectorXd actual(1), no_noise(1);
  actual << 0.0;
  no_noise << 0.0;

  // total variance 1/(2*pi) makes the log density exactly zero
  PredictiveMixture unit_density = two_component(0.0, 0.0, 1.0 / (2.0 * M_PI), 1.0 / (2.0 * M_PI));
  CHECK(nlpd_metric(unit_density, actual, Eigen::VectorXd::Zero(2)) == doctest::Approx(0.0));

  // standard normal at its mode
  PredictiveMixture std_normal = two_component(0.0, 0.0, 1.0, 1.0);
  CHECK(nlpd_metric(std_normal, actual, Eigen::VectorXd::Zero(2)) ==
        doctest::Approx(0.5 * std::log(2.0 * M_PI)));

  // noise widening: component var 0.4 plus observation noise 0.6 is var 1
  PredictiveMixture narrow = two_component(0.0, 0.0, 0.4, 0.4);
  Eigen::VectorXd noise(2);
  noise << 0.6, 0.6;
  CHECK(nlpd_metric(narrow, actual, noise) == doctest::Approx(0.5 * std::log(2.0 * M_PI)));
}

TEST_CASE("nlpd of far-apart components does not underflow") {
  // second component is 1000 sigma away; mixture density is half the first's
  const PredictiveMixture mix = two_component(0.0, 1000.0, 1.0, 1.0);
  Eigen::VectorXd actual(1);
  actual << 0.0;
  const double nlpd = nlpd_metric(mix, actual, Eigen::VectorXd::Zero(2));
  CHECK(std::isfinite(nlpd));
  CHECK(nlpd == doctest::Approx(std::log(2.0) + 0.5 * std::log(2.0 * M_PI)));
}

TEST_CASE("empirical quantiles of a standard normal mixture") {
  const PredictiveMixture mix = two_component(0.0, 0.0, 1.0, 1.0);
  const QuantileBand band = empirical_quantiles(mix, 100000, 2.5, 97.5, 11);
  CHECK(std::abs(band.lower[0] + 1.959964) < 0.03);
  CHECK(std::abs(band.upper[0] - 1.959964) < 0.03);
  CHECK(band.lower[0] < band.upper[0]);
}

TEST_CASE("quantiles are deterministic in the seed and shift with the mixture") {
  const PredictiveMixture mix = two_component(-2.0, 2.0, 0.01, 0.01);
  const QuantileBand a = empirical_quantiles(mix, 20000, 2.5, 97.5, 5);
  const QuantileBand b = empirical_quantiles(mix, 20000, 2.5, 97.5, 5);
  CHECK(a.lower[0] == b.lower[0]);
  CHECK(a.upper[0] == b.upper[0]);
  // 2.5% of the mixture is the 5th percentile of the lower component:
  // -2 - 1.6449 * 0.1
  CHECK(std::abs(a.lower[0] + 2.16449) < 0.05);
  CHECK(std::abs(a.upper[0] - 2.16449) < 0.05);
}

TEST_CASE("equal stride thinning") {
  Eigen::MatrixXd draws(5, 2);
  for (int i = 0; i < 5; ++i) {
    draws(i, 0) = i;
    draws(i, 1) = 10 + i;
  }
  SUBCASE("already small enough is returned unchanged") {
    const Eigen::MatrixXd out = equal_stride_thin(draws, 5);
    CHECK(out.rows() == 5);
    CHECK((out - draws).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::MatrixXd more = equal_stride_thin(draws, 50);
    CHECK(more.rows() == 5);
  }
  SUBCASE("count three spans first to last") {
    const Eigen::MatrixXd out = equal_stride_thin(draws, 3);
    REQUIRE(out.rows() == 3);
    CHECK(out(0, 0) == 0.0);
    CHECK(out(1, 0) == 2.0);
    CHECK(out(2, 0) == 4.0);
  }
  SUBCASE("count one keeps a single row") {
    const Eigen::MatrixXd out = equal_stride_thin(draws, 1);
    REQUIRE(out.rows() == 1);
  }
}

TEST_CASE("build_mixture matches the per-draw GP posterior") {
  Eigen::MatrixXd X(6, 1), Xs(3, 1);
  X << 0.0, 0.4, 1.1, 1.9, 2.6, 3.3;
  Xs << 0.7, 2.0, 4.0;
  Eigen::VectorXd y(6);
  y << 0.1, 0.8, 0.9, -0.3, -1.0, -0.2;
  const KernelExpr expr = parse_kernel_expr("SE + Noise", 1);

  Eigen::MatrixXd draws(2, 3);
  draws.row(0) << 0.2, -0.1, std::log(0.3);
  draws.row(1) << -0.4, 0.5, std::log(0.05);

  const MixtureBuild built = build_mixture(expr, X, y, Xs, draws, false);
  REQUIRE(built.mixture.components() == 2);
  REQUIRE(built.mixture.points() == 3);
  CHECK(built.mixture.dropped.empty());

  for (int m = 0; m < 2; ++m) {
    const ThetaVector theta{Eigen::VectorXd(draws.row(m).transpose())};
    const GPPosteriorGaussian ref = predictive_posterior(expr, theta, X, y, Xs, false);
    for (int i = 0; i < 3; ++i) {
      CHECK(built.mixture.means(m, i) == doctest::Approx(ref.mean[i]).epsilon(1e-12));
      CHECK(built.mixture.vars(m, i) == doctest::Approx(ref.var[i]).epsilon(1e-12));
    }
    CHECK(built.noise_vars[m] == doctest::Approx(theta.theta(2) * theta.theta(2)));
  }
}

TEST_CASE("unfactorable draws are dropped with their rows recorded") {
  Eigen::MatrixXd X(4, 1), Xs(2, 1);
  X << 0.0, 1.0, 2.0, 3.0;
  Xs << 0.5, 1.5;
  Eigen::VectorXd y(4);
  y << 1.0, -1.0, 1.0, -1.0;
  const KernelExpr expr = parse_kernel_expr("SE + Noise", 1);

  Eigen::MatrixXd draws(3, 3);
  draws.row(0) << 0.0, 0.0, std::log(0.1);
  draws.row(1) << 710.0, 0.0, -710.0;  // exp overflow: amplitude infinite
  draws.row(2) << 0.1, 0.2, std::log(0.2);

  const MixtureBuild built = build_mixture(expr, X, y, Xs, draws, false);
  CHECK(built.mixture.components() == 2);
  REQUIRE(built.mixture.dropped.size() == 1);
  CHECK(built.mixture.dropped[0] == 1);

  Eigen::MatrixXd all_bad(1, 3);
  all_bad.row(0) << 710.0, 0.0, -710.0;
  CHECK_THROWS(build_mixture(expr, X, y, Xs, all_bad, false));
}

}
