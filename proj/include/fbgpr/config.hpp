#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fbgpr/dataset.hpp"
#include "fbgpr/model.hpp"

namespace fbgpr {

// Flat section.key configuration for one experiment run.  Defaults here are
// the documented defaults; parse/validate/echo keep the same canonical key
// set so a config round-trips bit-exactly through its echo.
struct ExperimentConfig {
  // [data]
  std::string data_path;
  std::string data_target;
  std::string data_name;

  // [kernel]
  std::string kernel_expression;
  double kernel_period = 1.0;
  bool sample_periods = false;
  bool share_product_amplitude = true;

  // [split]
  SplitSpec split;

  // [prior]
  double prior_default_std = 3.0;
  bool prior_center_on_ml2 = false;
  double prior_center_std = 0.5;
  double noise_gamma_shape = 2.0;
  double noise_gamma_rate = 0.1;
  // Per-slot overrides as (slot name, literal) pairs, insertion order kept.
  std::vector<std::pair<std::string, std::string>> slot_priors;

  // [scheme]
  std::string scheme = "nuts";  // ml2 | nuts | vi-meanfield | vi-fullrank

  // [ml2]
  int ml2_restarts = 5;
  int ml2_max_iters = 1000;

  // [nuts]
  int nuts_chains = 4;
  int nuts_warmup = 500;
  int nuts_samples = 1000;
  double nuts_target_accept = 0.8;
  int nuts_max_depth = 10;
  std::string nuts_init = "data";  // data | zeros
  double nuts_init_jitter = 1.0;

  // [vi]
  int vi_mc_samples = 8;
  int vi_max_iters = 10000;
  double vi_threshold = 1e-4;
  int vi_elbo_samples = 200;
  double vi_rate = 0.0;  // 0 selects automatically
  int vi_check_every = 10;

  // [predict]
  int predict_draws = 300;
  int quantile_samples = 10000;
  bool include_noise_nlpd = true;
  bool full_cov = false;

  // [run]
  std::uint64_t seed = 0;
  std::string standardize = "auto";  // auto | on | off
  std::string out_dir = "out";
  int threads = 0;
};

// Text format: `[section]` headers, `key = value` lines, `#` comments,
// blank lines ignored.  Unknown keys are errors.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

// Applies one `section.key=value` assignment (shared by the file parser and
// command-line overrides).
void set_config_value(ExperimentConfig& config, const std::string& dotted_key,
                      const std::string& value);

void validate_config(const ExperimentConfig& config);

// Canonical text rendering; parse_config_text(config_echo(c)) reproduces c.
std::string config_echo(const ExperimentConfig& config);

// Prior literals: normal_log(m, s) on log parameters, gamma(shape, rate) or
// normal(m, s) on the constrained parameter.
SlotPrior parse_prior_literal(const std::string& text);

}  // namespace fbgpr
