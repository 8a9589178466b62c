#include "fbgpr/config.hpp"

#include <cctype>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include "fbgpr/io.hpp"

namespace fbgpr {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& want) {
  std::ostringstream msg;
  msg << "config key '" << key << "': cannot read '" << value << "' as " << want;
  throw std::invalid_argument(msg.str());
}

double to_double(const std::string& key, const std::string& value) {
  const char* begin = value.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') bad_value(key, value, "a number");
  return v;
}

int to_int(const std::string& key, const std::string& value) {
  const char* begin = value.c_str();
  char* end = nullptr;
  const long v = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0') bad_value(key, value, "an integer");
  return static_cast<int>(v);
}

std::uint64_t to_uint64(const std::string& key, const std::string& value) {
  const char* begin = value.c_str();
  char* end = nullptr;
  const unsigned long long v = std::strtoull(begin, &end, 10);
  if (end == begin || *end != '\0' || value.front() == '-')
    bad_value(key, value, "a non-negative integer");
  return static_cast<std::uint64_t>(v);
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "on" || value == "1") return true;
  if (value == "false" || value == "off" || value == "0") return false;
  bad_value(key, value, "a boolean (true/false)");
}

}  // namespace

SlotPrior parse_prior_literal(const std::string& text) {
  const std::string t = trim(text);
  const std::size_t open = t.find('(');
  if (open == std::string::npos || t.back() != ')')
    throw std::invalid_argument("prior literal must look like name(a, b): " + text);
  const std::string name = trim(t.substr(0, open));
  const std::string args = t.substr(open + 1, t.size() - open - 2);
  const std::size_t comma = args.find(',');
  if (comma == std::string::npos)
    throw std::invalid_argument("prior literal needs two arguments: " + text);
  const double a = to_double("prior", trim(args.substr(0, comma)));
  const double b = to_double("prior", trim(args.substr(comma + 1)));
  if (name == "normal_log") return SlotPrior::normal_log(a, b);
  if (name == "gamma") return SlotPrior::gamma(a, b);
  if (name == "normal") return SlotPrior::normal(a, b);
  throw std::invalid_argument("unknown prior family '" + name + "' in: " + text);
}

void set_config_value(ExperimentConfig& c, const std::string& dotted_key,
                      const std::string& raw_value) {
  const std::size_t dot = dotted_key.find('.');
  if (dot == std::string::npos)
    throw std::invalid_argument("config key must be section.key: " + dotted_key);
  const std::string section = dotted_key.substr(0, dot);
  const std::string key = dotted_key.substr(dot + 1);
  const std::string value = trim(raw_value);

  if (section == "data") {
    if (key == "path") c.data_path = value;
    else if (key == "target") c.data_target = value;
    else if (key == "name") c.data_name = value;
    else throw std::invalid_argument("unknown config key: " + dotted_key);
    return;
  }
  if (section == "kernel") {
    if (key == "expression") c.kernel_expression = value;
    else if (key == "period") c.kernel_period = to_double(dotted_key, value);
    else if (key == "sample_periods") c.sample_periods = to_bool(dotted_key, value);
    else if (key == "share_product_amplitude")
      c.share_product_amplitude = to_bool(dotted_key, value);
    else throw std::invalid_argument("unknown config key: " + dotted_key);
    return;
  }
  if (section == "split") {
    if (key == "kind") {
      if (value == "random") c.split.kind = SplitSpec::Kind::RandomFraction;
      else if (value == "first_k") c.split.kind = SplitSpec::Kind::FirstK;
      else bad_value(dotted_key, value, "random or first_k");
    } else if (key == "fraction") c.split.fraction = to_double(dotted_key, value);
    else if (key == "k") c.split.k = to_int(dotted_key, value);
    else if (key == "seed") c.split.seed = to_uint64(dotted_key, value);
    else if (key == "train_subsample") c.split.train_subsample = to_int(dotted_key, value);
    else throw std::invalid_argument("unknown config key: " + dotted_key);
    return;
  }
  if (section == "prior") {
    if (key == "default_std") c.prior_default_std = to_double(dotted_key, value);
    else if (key == "center_on_ml2") c.prior_center_on_ml2 = to_bool(dotted_key, value);
    else if (key == "center_std") c.prior_center_std = to_double(dotted_key, value);
    else if (key == "noise_gamma_shape") c.noise_gamma_shape = to_double(dotted_key, value);
    else if (key == "noise_gamma_rate") c.noise_gamma_rate = to_double(dotted_key, value);
    else if (key.rfind("slot.", 0) == 0) {
      const std::string slot = key.substr(5);
      if (slot.empty()) throw std::invalid_argument("empty slot name in: " + dotted_key);
      parse_prior_literal(value);  // fail fast on malformed literals
      for (auto& entry : c.slot_priors) {
        if (entry.first == slot) {
          entry.second = value;
          return;
        }
      }
      c.slot_priors.emplace_back(slot, value);
    } else throw std::invalid_argument("unknown config key: " + dotted_key);
    return;
  }
  if (section == "scheme") {
    if (key == "name") c.scheme = value;
    else throw std::invalid_argument("unknown config key: " + dotted_key);
    return;
  }
  if (section == "ml2") {
    if (key == "restarts") c.ml2_restarts = to_int(dotted_key, value);
    else if (key == "max_iters") c.ml2_max_iters = to_int(dotted_key, value);
    else throw std::invalid_argument("unknown config key: " + dotted_key);
    return;
  }
  if (section == "nuts") {
    if (key == "chains") c.nuts_chains = to_int(dotted_key, value);
    else if (key == "warmup") c.nuts_warmup = to_int(dotted_key, value);
    else if (key == "samples") c.nuts_samples = to_int(dotted_key, value);
    else if (key == "target_accept") c.nuts_target_accept = to_double(dotted_key, value);
    else if (key == "max_depth") c.nuts_max_depth = to_int(dotted_key, value);
    else if (key == "init") c.nuts_init = value;
    else if (key == "init_jitter") c.nuts_init_jitter = to_double(dotted_key, value);
    else throw std::invalid_argument("unknown config key: " + dotted_key);
    return;
  }
  if (section == "vi") {
    if (key == "mc_samples") c.vi_mc_samples = to_int(dotted_key, value);
    else if (key == "max_iters") c.vi_max_iters = to_int(dotted_key, value);
    else if (key == "threshold") c.vi_threshold = to_double(dotted_key, value);
    else if (key == "elbo_samples") c.vi_elbo_samples = to_int(dotted_key, value);
    else if (key == "rate") c.vi_rate = to_double(dotted_key, value);
    else if (key == "check_every") c.vi_check_every = to_int(dotted_key, value);
    else throw std::invalid_argument("unknown config key: " + dotted_key);
    return;
  }
  if (section == "predict") {
    if (key == "draws") c.predict_draws = to_int(dotted_key, value);
    else if (key == "quantile_samples") c.quantile_samples = to_int(dotted_key, value);
    else if (key == "include_noise_nlpd") c.include_noise_nlpd = to_bool(dotted_key, value);
    else if (key == "full_cov") c.full_cov = to_bool(dotted_key, value);
    else throw std::invalid_argument("unknown config key: " + dotted_key);
    return;
  }
  if (section == "run") {
    if (key == "seed") c.seed = to_uint64(dotted_key, value);
    else if (key == "standardize") c.standardize = value;
    else if (key == "out") c.out_dir = value;
    else if (key == "threads") c.threads = to_int(dotted_key, value);
    else throw std::invalid_argument("unknown config key: " + dotted_key);
    return;
  }
  throw std::invalid_argument("unknown config section: " + section);
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(line_no) +
                                    ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (section.empty())
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": key before any [section]");
    set_config_value(config, section + "." + key, value);
  }
  return config;
}

ExperimentConfig load_config_file(const std::string& path) {
  return parse_config_text(read_text_file(path));
}

void validate_config(const ExperimentConfig& c) {
  if (c.data_path.empty()) throw std::invalid_argument("config needs data.path");
  if (c.data_target.empty()) throw std::invalid_argument("config needs data.target");
  if (c.kernel_expression.empty()) throw std::invalid_argument("config needs kernel.expression");
  if (!(c.kernel_period > 0.0)) throw std::invalid_argument("kernel.period must be > 0");
  if (c.scheme != "ml2" && c.scheme != "nuts" && c.scheme != "vi-meanfield" &&
      c.scheme != "vi-fullrank")
    throw std::invalid_argument("scheme.name must be ml2, nuts, vi-meanfield, or vi-fullrank");
  if (c.split.kind == SplitSpec::Kind::RandomFraction) {
    if (!(c.split.fraction > 0.0 && c.split.fraction < 1.0))
      throw std::invalid_argument("split.fraction must lie in (0, 1)");
  } else if (c.split.k < 1) {
    throw std::invalid_argument("split.k must be >= 1 for first_k splits");
  }
  if (c.split.train_subsample < 0)
    throw std::invalid_argument("split.train_subsample must be >= 0");
  if (!(c.prior_default_std > 0.0)) throw std::invalid_argument("prior.default_std must be > 0");
  if (!(c.prior_center_std > 0.0)) throw std::invalid_argument("prior.center_std must be > 0");
  if (!(c.noise_gamma_shape > 0.0 && c.noise_gamma_rate > 0.0))
    throw std::invalid_argument("noise gamma prior parameters must be > 0");
  for (const auto& entry : c.slot_priors) parse_prior_literal(entry.second);
  if (c.ml2_restarts < 1) throw std::invalid_argument("ml2.restarts must be >= 1");
  if (c.ml2_max_iters < 1) throw std::invalid_argument("ml2.max_iters must be >= 1");
  if (c.nuts_chains < 1 || c.nuts_warmup < 1 || c.nuts_samples < 1 || c.nuts_max_depth < 1)
    throw std::invalid_argument("nuts counts must be >= 1");
  if (!(c.nuts_target_accept > 0.0 && c.nuts_target_accept < 1.0))
    throw std::invalid_argument("nuts.target_accept must lie in (0, 1)");
  if (c.nuts_init != "data" && c.nuts_init != "zeros")
    throw std::invalid_argument("nuts.init must be data or zeros");
  if (c.nuts_init_jitter < 0.0) throw std::invalid_argument("nuts.init_jitter must be >= 0");
  if (c.vi_mc_samples < 1 || c.vi_max_iters < 1 || c.vi_elbo_samples < 1 || c.vi_check_every < 1)
    throw std::invalid_argument("vi counts must be >= 1");
  if (!(c.vi_threshold > 0.0)) throw std::invalid_argument("vi.threshold must be > 0");
  if (c.vi_rate < 0.0) throw std::invalid_argument("vi.rate must be >= 0");
  if (c.predict_draws < 1) throw std::invalid_argument("predict.draws must be >= 1");
  if (c.quantile_samples < 100)
    throw std::invalid_argument("predict.quantile_samples must be >= 100");
  if (c.standardize != "auto" && c.standardize != "on" && c.standardize != "off")
    throw std::invalid_argument("run.standardize must be auto, on, or off");
  if (c.out_dir.empty()) throw std::invalid_argument("config needs run.out");
  if (c.threads < 0) throw std::invalid_argument("run.threads must be >= 0");
}

std::string config_echo(const ExperimentConfig& c) {
  std::ostringstream out;
  const auto b = [](bool v) { return v ? "true" : "false"; };
  out << "[data]\n";
  out << "path = " << c.data_path << "\n";
  out << "target = " << c.data_target << "\n";
  if (!c.data_name.empty()) out << "name = " << c.data_name << "\n";
  out << "\n[kernel]\n";
  out << "expression = " << c.kernel_expression << "\n";
  out << "period = " << format_double(c.kernel_period) << "\n";
  out << "sample_periods = " << b(c.sample_periods) << "\n";
  out << "share_product_amplitude = " << b(c.share_product_amplitude) << "\n";
  out << "\n[split]\n";
  if (c.split.kind == SplitSpec::Kind::RandomFraction) {
    out << "kind = random\n";
    out << "fraction = " << format_double(c.split.fraction) << "\n";
    out << "seed = " << c.split.seed << "\n";
  } else {
    out << "kind = first_k\n";
    out << "k = " << c.split.k << "\n";
  }
  out << "train_subsample = " << c.split.train_subsample << "\n";
  out << "\n[prior]\n";
  out << "default_std = " << format_double(c.prior_default_std) << "\n";
  out << "center_on_ml2 = " << b(c.prior_center_on_ml2) << "\n";
  out << "center_std = " << format_double(c.prior_center_std) << "\n";
  out << "noise_gamma_shape = " << format_double(c.noise_gamma_shape) << "\n";
  out << "noise_gamma_rate = " << format_double(c.noise_gamma_rate) << "\n";
  for (const auto& entry : c.slot_priors)
    out << "slot." << entry.first << " = " << entry.second << "\n";
  out << "\n[scheme]\n";
  out << "name = " << c.scheme << "\n";
  out << "\n[ml2]\n";
  out << "restarts = " << c.ml2_restarts << "\n";
  out << "max_iters = " << c.ml2_max_iters << "\n";
  out << "\n[nuts]\n";
  out << "chains = " << c.nuts_chains << "\n";
  out << "warmup = " << c.nuts_warmup << "\n";
  out << "samples = " << c.nuts_samples << "\n";
  out << "target_accept = " << format_double(c.nuts_target_accept) << "\n";
  out << "max_depth = " << c.nuts_max_depth << "\n";
  out << "init = " << c.nuts_init << "\n";
  out << "init_jitter = " << format_double(c.nuts_init_jitter) << "\n";
  out << "\n[vi]\n";
  out << "mc_samples = " << c.vi_mc_samples << "\n";
  out << "max_iters = " << c.vi_max_iters << "\n";
  out << "threshold = " << format_double(c.vi_threshold) << "\n";
  out << "elbo_samples = " << c.vi_elbo_samples << "\n";
  out << "rate = " << format_double(c.vi_rate) << "\n";
  out << "check_every = " << c.vi_check_every << "\n";
  out << "\n[predict]\n";
  out << "draws = " << c.predict_draws << "\n";
  out << "quantile_samples = " << c.quantile_samples << "\n";
  out << "include_noise_nlpd = " << b(c.include_noise_nlpd) << "\n";
  out << "full_cov = " << b(c.full_cov) << "\n";
  out << "\n[run]\n";
  out << "seed = " << c.seed << "\n";
  out << "standardize = " << c.standardize << "\n";
  out << "out = " << c.out_dir << "\n";
  out << "threads = " << c.threads << "\n";
  return out.str();
}

}  // namespace fbgpr
