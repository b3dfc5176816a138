#include "dbb/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "dbb/format.hpp"

namespace dbb {

namespace {

const std::set<std::string> kMarketKeys = {"d",   "s0",    "r",     "T",  "nu0",
                                           "theta", "rho", "kappa", "xi", "moneyness"};
const std::set<std::string> kSolverKeys = {
    "method",     "n_steps",    "batch",      "val_size", "lr",        "iters_forward",
    "iters_first", "iters_rest", "hidden",     "activation", "lr_decay", "val_every",
    "batch_norm"};
const std::set<std::string> kExperimentKeys = {"family",     "sweep",    "methods",
                                               "runs_per_setting", "mc_paths", "mc_steps",
                                               "workers",    "save_loss_curves"};

void check_known_keys(const ConfigMap& cfg, const std::string& section,
                      const std::set<std::string>& known) {
  const std::string prefix = section + ".";
  for (const auto& [key, value] : cfg.values) {
    (void)value;
    if (key.rfind(prefix, 0) != 0) continue;
    const std::string bare = key.substr(prefix.size());
    if (!known.count(bare))
      throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
  }
}

double get_double(const ConfigMap& cfg, const std::string& key, double fallback) {
  if (!cfg.has(key)) return fallback;
  try {
    return parse_double(cfg.get(key));
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + cfg.get(key) + "'");
  }
}

std::size_t get_size(const ConfigMap& cfg, const std::string& key, std::size_t fallback) {
  if (!cfg.has(key)) return fallback;
  try {
    const long long v = parse_int(cfg.get(key));
    if (v < 0) throw std::invalid_argument("negative");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a nonnegative integer, got '" + cfg.get(key) +
                      "'");
  }
}

bool get_bool(const ConfigMap& cfg, const std::string& key, bool fallback) {
  if (!cfg.has(key)) return fallback;
  try {
    return parse_bool(cfg.get(key));
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a boolean, got '" + cfg.get(key) + "'");
  }
}

}  // namespace

const std::string& ConfigMap::get(const std::string& key) const {
  const auto it = values.find(key);
  if (it == values.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

std::string ConfigMap::get_or(const std::string& key, const std::string& fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

ConfigMap parse_config_text(const std::string& text, const std::string& origin) {
  ConfigMap cfg;
  std::istringstream is(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (section.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": key outside any section");
    cfg.values[section + "." + key] = value;
  }
  return cfg;
}

ConfigMap parse_config_file(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot open config file " + file.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str(), file.string());
}

void apply_overrides(ConfigMap& cfg, const std::vector<std::string>& overrides) {
  for (const std::string& ov : overrides) {
    const std::size_t eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + ov + "' is not of the form section.key=value");
    const std::string key = trim(ov.substr(0, eq));
    if (key.find('.') == std::string::npos)
      throw ConfigError("override key '" + key + "' must be section.key");
    cfg.values[key] = trim(ov.substr(eq + 1));
  }
}

HestonParams market_from_config(const ConfigMap& cfg) {
  check_known_keys(cfg, "market", kMarketKeys);
  HestonParams p;
  p.d = get_size(cfg, "market.d", p.d);
  p.s0 = get_double(cfg, "market.s0", p.s0);
  p.r = get_double(cfg, "market.r", p.r);
  p.t_mat = get_double(cfg, "market.T", p.t_mat);
  p.nu0 = get_double(cfg, "market.nu0", p.nu0);
  p.theta = get_double(cfg, "market.theta", p.theta);
  p.rho = get_double(cfg, "market.rho", p.rho);
  p.kappa = get_double(cfg, "market.kappa", p.kappa);
  p.xi = get_double(cfg, "market.xi", p.xi);
  p.moneyness = get_double(cfg, "market.moneyness", p.moneyness);
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return p;
}

SolverConfig solver_from_config(const ConfigMap& cfg) {
  check_known_keys(cfg, "solver", kSolverKeys);
  SolverConfig s;
  if (cfg.has("solver.method")) {
    try {
      s.method = method_from_string(cfg.get("solver.method"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  s.n_steps = get_size(cfg, "solver.n_steps", s.n_steps);
  s.batch = get_size(cfg, "solver.batch", s.batch);
  s.val_size = get_size(cfg, "solver.val_size", s.val_size);
  s.lr = get_double(cfg, "solver.lr", s.lr);
  s.iters_forward = get_size(cfg, "solver.iters_forward", s.iters_forward);
  s.iters_first = get_size(cfg, "solver.iters_first", s.iters_first);
  s.iters_rest = get_size(cfg, "solver.iters_rest", s.iters_rest);
  s.val_every = get_size(cfg, "solver.val_every", s.val_every);
  s.lr_decay = get_bool(cfg, "solver.lr_decay", s.lr_decay);
  if (cfg.has("solver.hidden")) {
    s.hidden.clear();
    for (const std::string& part : split(cfg.get("solver.hidden"), ',')) {
      const std::string w = trim(part);
      try {
        const long long v = parse_int(w);
        if (v < 1) throw std::invalid_argument("nonpositive");
        s.hidden.push_back(static_cast<std::size_t>(v));
      } catch (const std::exception&) {
        throw ConfigError("solver.hidden: bad width '" + w + "'");
      }
    }
  }
  if (cfg.has("solver.activation")) {
    try {
      s.activation = activation_from_string(cfg.get("solver.activation"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  // Extension hook kept for a normalization ablation; not supported yet.
  if (get_bool(cfg, "solver.batch_norm", false))
    throw ConfigError("solver.batch_norm=true is not supported by this build");
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

ExperimentSpec experiment_from_config(const ConfigMap& cfg) {
  check_known_keys(cfg, "experiment", kExperimentKeys);
  ExperimentSpec spec;
  spec.base_market = market_from_config(cfg);
  spec.base_solver = solver_from_config(cfg);
  try {
    spec.family = family_from_string(cfg.get("experiment.family"));
    for (const std::string& part : split(cfg.get("experiment.sweep"), ','))
      spec.sweep_values.push_back(parse_double(trim(part)));
    if (cfg.has("experiment.methods")) {
      for (const std::string& part : split(cfg.get("experiment.methods"), ','))
        spec.methods.push_back(method_from_string(trim(part)));
    } else {
      spec.methods = all_methods();
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  spec.runs_per_setting = get_size(cfg, "experiment.runs_per_setting", spec.runs_per_setting);
  spec.mc_paths = get_size(cfg, "experiment.mc_paths", spec.mc_paths);
  spec.mc_steps = get_size(cfg, "experiment.mc_steps", spec.mc_steps);
  spec.workers = get_size(cfg, "experiment.workers", spec.workers);
  spec.save_loss_curves = get_bool(cfg, "experiment.save_loss_curves", spec.save_loss_curves);
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

std::uint64_t config_hash(const ConfigMap& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [key, value] : cfg.values) {  // std::map iterates sorted
    for (unsigned char c : key) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= '=';
    h *= 0x100000001b3ULL;
    for (unsigned char c : value) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= '\n';
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace dbb
