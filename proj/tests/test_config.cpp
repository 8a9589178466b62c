#include <doctest.h>

#include <stdexcept>
#include <string>

#include "fbgpr/config.hpp"

using namespace fbgpr;

TEST_SUITE("config") {

TEST_CASE("defaults") {
  ExperimentConfig c;
  CHECK(c.scheme == "nuts");
  CHECK(c.prior_default_std == 3.0);
  CHECK(c.prior_center_std == 0.5);
  CHECK(c.noise_gamma_shape == 2.0);
  CHECK(c.noise_gamma_rate == 0.1);
  CHECK(c.nuts_chains == 4);
  CHECK(c.nuts_warmup == 500);
  CHECK(c.nuts_samples == 1000);
  CHECK(c.predict_draws == 300);
  CHECK(c.standardize == "auto");
  CHECK(c.kernel_period == 1.0);
  CHECK(c.share_product_amplitude);
  CHECK_FALSE(c.sample_periods);
}

TEST_CASE("set_config_value dispatches by section") {
  ExperimentConfig c;
  set_config_value(c, "data.path", "foo.csv");
  set_config_value(c, "data.target", "y");
  set_config_value(c, "kernel.expression", "SE + Noise");
  set_config_value(c, "kernel.period", "2.5");
  set_config_value(c, "split.kind", "first_k");
  set_config_value(c, "split.k", "42");
  set_config_value(c, "prior.center_on_ml2", "true");
  set_config_value(c, "scheme.name", "vi-fullrank");
  set_config_value(c, "nuts.samples", "123");
  set_config_value(c, "vi.mc_samples", "16");
  set_config_value(c, "predict.draws", "77");
  set_config_value(c, "run.seed", "99");
  set_config_value(c, "run.standardize", "off");

  CHECK(c.data_path == "foo.csv");
  CHECK(c.kernel_expression == "SE + Noise");
  CHECK(c.kernel_period == 2.5);
  CHECK(c.split.kind == SplitSpec::Kind::FirstK);
  CHECK(c.split.k == 42);
  CHECK(c.prior_center_on_ml2);
  CHECK(c.scheme == "vi-fullrank");
  CHECK(c.nuts_samples == 123);
  CHECK(c.vi_mc_samples == 16);
  CHECK(c.predict_draws == 77);
  CHECK(c.seed == 99);
  CHECK(c.standardize == "off");
}

TEST_CASE("set_config_value errors") {
  ExperimentConfig c;
  CHECK_THROWS_AS(set_config_value(c, "nosection", "1"), std::invalid_argument);
  CHECK_THROWS_AS(set_config_value(c, "data.bogus", "1"), std::invalid_argument);
  CHECK_THROWS_AS(set_config_value(c, "made.up", "1"), std::invalid_argument);
  CHECK_THROWS_AS(set_config_value(c, "nuts.samples", "abc"), std::invalid_argument);
  CHECK_THROWS_AS(set_config_value(c, "run.seed", "-3"), std::invalid_argument);
  CHECK_THROWS_AS(set_config_value(c, "prior.center_on_ml2", "maybe"), std::invalid_argument);
}

TEST_CASE("config text parsing") {
  const std::string text =
      "# comment\n"
      "[data]\n"
      "path = a.csv\n"
      "target = y\n"
      "\n"
      "[kernel]\n"
      "expression = SE*Per + Noise  \n"
      "\n"
      "[split]\n"
      "kind = random\n"
      "fraction = 0.75\n"
      "seed = 5\n"
      "[run]\n"
      "out = somewhere\n";
  const ExperimentConfig c = parse_config_text(text);
  CHECK(c.data_path == "a.csv");
  CHECK(c.kernel_expression == "SE*Per + Noise");
  CHECK(c.split.kind == SplitSpec::Kind::RandomFraction);
  CHECK(c.split.fraction == 0.75);
  CHECK(c.split.seed == 5);
  CHECK(c.out_dir == "somewhere");
}

TEST_CASE("parse rejects unknown keys and stray lines") {
  CHECK_THROWS(parse_config_text("[data]\nnope = 1\n"));
  CHECK_THROWS(parse_config_text("[nosuch]\npath = 1\n"));
  CHECK_THROWS(parse_config_text("key_without_section = 1\n"));
  CHECK_THROWS(parse_config_text("[data]\nline without equals\n"));
}

TEST_CASE("echo round trips") {
  ExperimentConfig c;
  c.data_path = "fx/toy.csv";
  c.data_target = "y";
  c.data_name = "toy";
  c.kernel_expression = "SE + SE*Per + Noise";
  c.kernel_period = 0.5;
  c.split.kind = SplitSpec::Kind::FirstK;
  c.split.k = 30;
  c.prior_center_on_ml2 = true;
  c.prior_center_std = 0.25;
  c.slot_priors.emplace_back("s_1", "normal_log(5.75, 0.15)");
  c.slot_priors.emplace_back("n_6", "gamma(2, 0.1)");
  c.scheme = "vi-meanfield";
  c.nuts_samples = 250;
  c.seed = 17;
  c.out_dir = "bundle";

  const std::string echoed = config_echo(c);
  const ExperimentConfig back = parse_config_text(echoed);
  CHECK(back.data_path == c.data_path);
  CHECK(back.kernel_expression == c.kernel_expression);
  CHECK(back.kernel_period == c.kernel_period);
  CHECK(back.split.kind == c.split.kind);
  CHECK(back.split.k == c.split.k);
  CHECK(back.prior_center_on_ml2 == c.prior_center_on_ml2);
  CHECK(back.prior_center_std == c.prior_center_std);
  CHECK(back.slot_priors == c.slot_priors);
  CHECK(back.scheme == c.scheme);
  CHECK(back.nuts_samples == c.nuts_samples);
  CHECK(back.seed == c.seed);
  CHECK(back.out_dir == c.out_dir);

  // echo of the parsed echo is a fixpoint
  CHECK(config_echo(back) == echoed);
}

TEST_CASE("slot prior overrides parse eagerly and keep order") {
  ExperimentConfig c;
  set_config_value(c, "prior.slot.s_1", "normal_log(1, 0.5)");
  set_config_value(c, "prior.slot.ls_2", "gamma(2, 0.1)");
  REQUIRE(c.slot_priors.size() == 2);
  CHECK(c.slot_priors[0].first == "s_1");
  CHECK(c.slot_priors[1].first == "ls_2");

  // same slot again replaces rather than duplicating
  set_config_value(c, "prior.slot.s_1", "normal(0, 1)");
  REQUIRE(c.slot_priors.size() == 2);
  CHECK(c.slot_priors[0].second == "normal(0, 1)");

  CHECK_THROWS(set_config_value(c, "prior.slot.s_1", "cauchy(0, 1)"));
  CHECK_THROWS(set_config_value(c, "prior.slot.", "normal(0, 1)"));
  CHECK_THROWS(set_config_value(c, "prior.slot.s_1", "normal_log(1)"));
}

TEST_CASE("prior literal parsing") {
  const SlotPrior a = parse_prior_literal("normal_log(1.5, 0.5)");
  CHECK(a.kind == SlotPrior::Kind::NormalInLogSpace);
  CHECK(a.a == 1.5);
  CHECK(a.b == 0.5);
  const SlotPrior g = parse_prior_literal("  gamma( 2 , 0.1 ) ");
  CHECK(g.kind == SlotPrior::Kind::GammaOnConstrained);
  const SlotPrior n = parse_prior_literal("normal(-1, 2)");
  CHECK(n.kind == SlotPrior::Kind::NormalOnConstrained);
  CHECK(n.a == -1.0);

  CHECK_THROWS(parse_prior_literal("normal_log"));
  CHECK_THROWS(parse_prior_literal("normal_log()"));
  CHECK_THROWS(parse_prior_literal("flat(1, 2)"));
  CHECK_THROWS(parse_prior_literal("normal_log(a, b)"));
}

TEST_CASE("validation catches inconsistent settings") {
  ExperimentConfig c;
  c.data_path = "x.csv";
  c.data_target = "y";
  c.kernel_expression = "SE + Noise";
  validate_config(c);  // baseline passes

  ExperimentConfig bad = c;
  bad.scheme = "laplace";
  CHECK_THROWS(validate_config(bad));

  bad = c;
  bad.nuts_chains = 0;
  CHECK_THROWS(validate_config(bad));

  bad = c;
  bad.split.fraction = 1.5;
  CHECK_THROWS(validate_config(bad));

  bad = c;
  bad.standardize = "sometimes";
  CHECK_THROWS(validate_config(bad));

  bad = c;
  bad.data_path.clear();
  CHECK_THROWS(validate_config(bad));

  bad = c;
  bad.prior_center_std = -1.0;
  CHECK_THROWS(validate_config(bad));

  bad = c;
  bad.slot_priors.emplace_back("s_1", "normal_log(1)");
  CHECK_THROWS(validate_config(bad));
}

}
