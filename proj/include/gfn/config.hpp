#pragma once

// Flat, sectioned key=value experiment configs. A config comes from a named
// preset or a file, takes `section.key=value` overrides, and resolves into a
// typed RunConfig. Parse and validation errors carry line numbers. The
// resolved config is re-serialized canonically (fixed section and key order)
// so identical settings hash identically.

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfn/env_bits.hpp"
#include "gfn/io_util.hpp"
#include "gfn/env_set.hpp"
#include "gfn/model.hpp"
#include "gfn/objectives.hpp"
#include "gfn/trainer.hpp"

namespace gfn {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParsedConfig {
  struct Value {
    std::string text;
    int line = 0;
  };
  std::map<std::string, std::map<std::string, Value>> sections;

  const Value* find(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    if (s == sections.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }
};

inline ParsedConfig parse_config_text(const std::string& text,
                                      const std::string& origin = "<config>") {
  ParsedConfig out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) fail("empty section name");
      out.sections[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail("empty key");
    if (section.empty()) fail("key outside of any [section]");
    out.sections[section][key] = ParsedConfig::Value{value, lineno};
  }
  return out;
}

/// Applies one `section.key=value` override.
inline void apply_override(ParsedConfig& cfg, const std::string& spec) {
  const auto eq = spec.find('=');
  const auto dot = spec.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw ConfigError("override must look like section.key=value: " + spec);
  cfg.sections[spec.substr(0, dot)][spec.substr(dot + 1, eq - dot - 1)] =
      ParsedConfig::Value{spec.substr(eq + 1), 0};
}

// ---------------------------------------------------------------------------

struct RunConfig {
  std::string name = "custom";

  // env
  std::string env_kind = "set";  // "set" | "bits"
  SetEnvConfig set_env;
  BitSeqEnvConfig bit_env;
  std::string modes_file;

  // model
  std::size_t hidden = 64;
  std::size_t hidden_layers = 2;
  BackwardMode backward = BackwardMode::kLearned;

  ObjectiveConfig objective;
  ExplorationConfig exploration{0.05, 1.0};

  // optimizer
  double policy_lr = 1e-3;
  double logz_lr = 0.1;
  std::map<std::string, double> policy_lr_overrides;  // keyed by objective name

  // train
  int batch_size = 16;
  long long budget = 50000;
  bool partial = false;
  std::uint64_t seed = 1;
  int threads = 1;
  long long metric_every = 1000;

  // eval
  std::size_t topk = 100;
  std::uint64_t enum_cap = kDefaultEnumCap;
  double mode_percentile = 99.0;
  std::optional<double> mode_threshold;
  std::optional<double> mode_energy_margin;
  int mode_radius = 0;
  std::string test_set_file;

  // sweep
  std::vector<std::string> sweep_objectives;
  std::vector<std::uint64_t> sweep_seeds;

  double resolved_policy_lr() const {
    auto it = policy_lr_overrides.find(to_string(objective.kind));
    return it == policy_lr_overrides.end() ? policy_lr : it->second;
  }

  FlowMode flow_mode() const {
    return is_forward_looking(objective.kind) ? FlowMode::kForwardLooking
                                              : FlowMode::kPlain;
  }
};

namespace detail {

struct FieldReader {
  const ParsedConfig& cfg;
  const std::string origin;

  [[noreturn]] void fail(const ParsedConfig::Value& v, const std::string& msg) const {
    throw ConfigError(origin + ":" + std::to_string(v.line) + ": " + msg);
  }

  template <class F>
  void with(const std::string& section, const std::string& key, F&& f) const {
    if (const auto* v = cfg.find(section, key)) f(*v);
  }

  double num(const ParsedConfig::Value& v) const {
    try {
      std::size_t used = 0;
      const double d = std::stod(v.text, &used);
      if (used != v.text.size()) throw std::invalid_argument("");
      return d;
    } catch (...) {
      fail(v, "expected a number, got '" + v.text + "'");
    }
  }

  long long integer(const ParsedConfig::Value& v) const {
    try {
      std::size_t used = 0;
      const long long i = std::stoll(v.text, &used);
      if (used != v.text.size()) throw std::invalid_argument("");
      return i;
    } catch (...) {
      fail(v, "expected an integer, got '" + v.text + "'");
    }
  }

  bool boolean(const ParsedConfig::Value& v) const {
    if (v.text == "true" || v.text == "1") return true;
    if (v.text == "false" || v.text == "0") return false;
    fail(v, "expected true/false, got '" + v.text + "'");
  }

  std::vector<std::string> list(const ParsedConfig::Value& v) const {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v.text + ",") {
      if (c == ',') {
        while (!cur.empty() && cur.front() == ' ') cur.erase(cur.begin());
        while (!cur.empty() && cur.back() == ' ') cur.pop_back();
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    return out;
  }
};

inline const std::map<std::string, std::vector<std::string>>& known_keys() {
  static const std::map<std::string, std::vector<std::string>> keys = {
      {"env",
       {"kind", "universe", "target_size", "beta", "seed", "energies", "n", "k",
        "num_modes", "modes_file"}},
      {"model", {"hidden", "layers", "backward"}},
      {"objective", {"kind", "subtb_lambda"}},
      {"exploration", {"epsilon", "temperature"}},
      {"optimizer",
       {"policy_lr", "logz_lr", "policy_lr_db", "policy_lr_tb", "policy_lr_subtb",
        "policy_lr_fl-db", "policy_lr_fl-subtb"}},
      {"train", {"batch", "budget", "partial", "seed", "threads", "metric_every"}},
      {"eval",
       {"topk", "enum_cap", "mode_percentile", "mode_threshold", "mode_energy_margin",
        "mode_radius", "test_set"}},
      {"sweep", {"objectives", "seeds"}},
  };
  return keys;
}

}  // namespace detail

inline RunConfig resolve_run_config(const ParsedConfig& parsed,
                                    const std::string& name = "custom",
                                    const std::string& origin = "<config>") {
  detail::FieldReader r{parsed, origin};

  for (const auto& [section, entries] : parsed.sections) {
    const auto& known = detail::known_keys();
    auto ks = known.find(section);
    if (ks == known.end()) {
      int line = entries.empty() ? 0 : entries.begin()->second.line;
      throw ConfigError(origin + ":" + std::to_string(line) + ": unknown section [" +
                        section + "]");
    }
    for (const auto& [key, value] : entries) {
      bool ok = false;
      for (const auto& k : ks->second) ok = ok || k == key;
      if (!ok)
        throw ConfigError(origin + ":" + std::to_string(value.line) + ": unknown key '" +
                          key + "' in section [" + section + "]");
    }
  }

  RunConfig out;
  out.name = name;

  r.with("env", "kind", [&](const auto& v) {
    if (v.text != "set" && v.text != "bits") r.fail(v, "env kind must be set or bits");
    out.env_kind = v.text;
  });
  r.with("env", "universe", [&](const auto& v) {
    out.set_env.universe_size = static_cast<int>(r.integer(v));
  });
  r.with("env", "target_size", [&](const auto& v) {
    out.set_env.target_size = static_cast<int>(r.integer(v));
  });
  r.with("env", "beta", [&](const auto& v) {
    out.set_env.beta = out.bit_env.beta = r.num(v);
    if (!(out.set_env.beta > 0.0)) r.fail(v, "beta must be positive");
  });
  r.with("env", "seed", [&](const auto& v) {
    out.set_env.seed = out.bit_env.seed = static_cast<std::uint64_t>(r.integer(v));
  });
  r.with("env", "energies", [&](const auto& v) {
    for (const auto& e : r.list(v)) out.set_env.element_energies.push_back(std::stod(e));
  });
  r.with("env", "n", [&](const auto& v) { out.bit_env.n = static_cast<int>(r.integer(v)); });
  r.with("env", "k", [&](const auto& v) { out.bit_env.k = static_cast<int>(r.integer(v)); });
  r.with("env", "num_modes",
         [&](const auto& v) { out.bit_env.num_modes = static_cast<int>(r.integer(v)); });
  r.with("env", "modes_file", [&](const auto& v) { out.modes_file = v.text; });

  r.with("model", "hidden", [&](const auto& v) {
    out.hidden = static_cast<std::size_t>(r.integer(v));
  });
  r.with("model", "layers", [&](const auto& v) {
    out.hidden_layers = static_cast<std::size_t>(r.integer(v));
  });
  r.with("model", "backward", [&](const auto& v) {
    if (v.text == "learned")
      out.backward = BackwardMode::kLearned;
    else if (v.text == "uniform")
      out.backward = BackwardMode::kFixedUniform;
    else
      r.fail(v, "backward must be learned or uniform");
  });

  r.with("objective", "kind", [&](const auto& v) {
    try {
      out.objective.kind = objective_from_string(v.text);
    } catch (const std::exception& e) {
      r.fail(v, e.what());
    }
  });
  r.with("objective", "subtb_lambda", [&](const auto& v) {
    out.objective.subtb_lambda = r.num(v);
    if (!(out.objective.subtb_lambda > 0.0 && out.objective.subtb_lambda <= 1.0))
      r.fail(v, "subtb_lambda must lie in (0, 1]");
  });

  r.with("exploration", "epsilon", [&](const auto& v) {
    out.exploration.epsilon = r.num(v);
    if (out.exploration.epsilon < 0.0 || out.exploration.epsilon > 1.0)
      r.fail(v, "epsilon must lie in [0, 1]");
  });
  r.with("exploration", "temperature", [&](const auto& v) {
    out.exploration.temperature = r.num(v);
    if (!(out.exploration.temperature > 0.0)) r.fail(v, "temperature must be positive");
  });

  r.with("optimizer", "policy_lr", [&](const auto& v) {
    out.policy_lr = r.num(v);
    if (!(out.policy_lr > 0.0)) r.fail(v, "policy_lr must be positive");
  });
  r.with("optimizer", "logz_lr", [&](const auto& v) {
    out.logz_lr = r.num(v);
    if (!(out.logz_lr > 0.0)) r.fail(v, "logz_lr must be positive");
  });
  for (const char* obj : {"db", "tb", "subtb", "fl-db", "fl-subtb"})
    r.with("optimizer", std::string("policy_lr_") + obj, [&](const auto& v) {
      out.policy_lr_overrides[obj] = r.num(v);
    });

  r.with("train", "batch", [&](const auto& v) {
    out.batch_size = static_cast<int>(r.integer(v));
    if (out.batch_size < 1) r.fail(v, "batch must be >= 1");
  });
  r.with("train", "budget", [&](const auto& v) {
    out.budget = r.integer(v);
    if (out.budget < 1) r.fail(v, "budget must be positive");
  });
  r.with("train", "partial", [&](const auto& v) { out.partial = r.boolean(v); });
  r.with("train", "seed",
         [&](const auto& v) { out.seed = static_cast<std::uint64_t>(r.integer(v)); });
  r.with("train", "threads", [&](const auto& v) {
    out.threads = static_cast<int>(r.integer(v));
    if (out.threads < 1) r.fail(v, "threads must be >= 1");
  });
  r.with("train", "metric_every", [&](const auto& v) {
    out.metric_every = r.integer(v);
    if (out.metric_every < 1) r.fail(v, "metric_every must be positive");
  });

  r.with("eval", "topk", [&](const auto& v) {
    out.topk = static_cast<std::size_t>(r.integer(v));
    if (out.topk < 1) r.fail(v, "topk must be >= 1");
  });
  r.with("eval", "enum_cap", [&](const auto& v) {
    out.enum_cap = static_cast<std::uint64_t>(r.integer(v));
  });
  r.with("eval", "mode_percentile",
         [&](const auto& v) { out.mode_percentile = r.num(v); });
  r.with("eval", "mode_threshold", [&](const auto& v) {
    out.mode_threshold = r.num(v);
    if (!(*out.mode_threshold > 0.0)) r.fail(v, "mode_threshold must be positive");
  });
  r.with("eval", "mode_energy_margin",
         [&](const auto& v) { out.mode_energy_margin = r.num(v); });
  r.with("eval", "mode_radius", [&](const auto& v) {
    out.mode_radius = static_cast<int>(r.integer(v));
    if (out.mode_radius < 0) r.fail(v, "mode_radius must be >= 0");
  });
  r.with("eval", "test_set", [&](const auto& v) { out.test_set_file = v.text; });

  r.with("sweep", "objectives",
         [&](const auto& v) { out.sweep_objectives = r.list(v); });
  r.with("sweep", "seeds", [&](const auto& v) {
    for (const auto& s : r.list(v))
      out.sweep_seeds.push_back(static_cast<std::uint64_t>(std::stoll(s)));
  });

  // Cross-field validation.
  if (out.partial && out.objective.kind == ObjectiveKind::kTb) {
    const auto* v = parsed.find("train", "partial");
    throw ConfigError(origin + ":" + std::to_string(v ? v->line : 0) +
                      ": tb cannot train on incomplete trajectories (train.partial)");
  }
  for (const auto& o : out.sweep_objectives) objective_from_string(o);  // validates
  return out;
}

// ---------------------------------------------------------------------------

/// Canonical serialization of a resolved config (fixed order, all values).
inline std::string canonical_config_text(const RunConfig& c) {
  std::ostringstream o;
  o << "[env]\n";
  o << "kind = " << c.env_kind << "\n";
  if (c.env_kind == "set") {
    o << "universe = " << c.set_env.universe_size << "\n";
    o << "target_size = " << c.set_env.target_size << "\n";
    o << "beta = " << fmt_g(c.set_env.beta) << "\n";
    o << "seed = " << c.set_env.seed << "\n";
    if (!c.set_env.element_energies.empty()) {
      o << "energies = ";
      for (std::size_t i = 0; i < c.set_env.element_energies.size(); ++i)
        o << (i ? "," : "") << fmt_g(c.set_env.element_energies[i]);
      o << "\n";
    }
  } else {
    o << "n = " << c.bit_env.n << "\n";
    o << "k = " << c.bit_env.k << "\n";
    o << "beta = " << fmt_g(c.bit_env.beta) << "\n";
    o << "seed = " << c.bit_env.seed << "\n";
    o << "num_modes = " << c.bit_env.num_modes << "\n";
    if (!c.modes_file.empty()) o << "modes_file = " << c.modes_file << "\n";
  }
  o << "[model]\n";
  o << "hidden = " << c.hidden << "\n";
  o << "layers = " << c.hidden_layers << "\n";
  o << "backward = " << to_string(c.backward) << "\n";
  o << "[objective]\n";
  o << "kind = " << to_string(c.objective.kind) << "\n";
  o << "subtb_lambda = " << fmt_g(c.objective.subtb_lambda) << "\n";
  o << "[exploration]\n";
  o << "epsilon = " << fmt_g(c.exploration.epsilon) << "\n";
  o << "temperature = " << fmt_g(c.exploration.temperature) << "\n";
  o << "[optimizer]\n";
  o << "policy_lr = " << fmt_g(c.policy_lr) << "\n";
  o << "logz_lr = " << fmt_g(c.logz_lr) << "\n";
  for (const auto& [obj, lr] : c.policy_lr_overrides)
    o << "policy_lr_" << obj << " = " << fmt_g(lr) << "\n";
  o << "[train]\n";
  o << "batch = " << c.batch_size << "\n";
  o << "budget = " << c.budget << "\n";
  o << "partial = " << (c.partial ? "true" : "false") << "\n";
  o << "seed = " << c.seed << "\n";
  o << "threads = " << c.threads << "\n";
  o << "metric_every = " << c.metric_every << "\n";
  o << "[eval]\n";
  o << "topk = " << c.topk << "\n";
  o << "enum_cap = " << c.enum_cap << "\n";
  o << "mode_percentile = " << fmt_g(c.mode_percentile) << "\n";
  if (c.mode_threshold) o << "mode_threshold = " << fmt_g(*c.mode_threshold) << "\n";
  if (c.mode_energy_margin)
    o << "mode_energy_margin = " << fmt_g(*c.mode_energy_margin) << "\n";
  o << "mode_radius = " << c.mode_radius << "\n";
  if (!c.test_set_file.empty()) o << "test_set = " << c.test_set_file << "\n";
  if (!c.sweep_objectives.empty()) {
    o << "[sweep]\n";
    o << "objectives = ";
    for (std::size_t i = 0; i < c.sweep_objectives.size(); ++i)
      o << (i ? "," : "") << c.sweep_objectives[i];
    o << "\n";
    o << "seeds = ";
    for (std::size_t i = 0; i < c.sweep_seeds.size(); ++i)
      o << (i ? "," : "") << c.sweep_seeds[i];
    o << "\n";
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// Named presets. The desk-scale instances (set-tiny, bits-tiny) are
// enumerable so runs report exact L1/Spearman; the larger presets match the
// standard small/medium/large and normal/long/verylong task sizes.

inline const std::map<std::string, std::string>& presets() {
  static const std::map<std::string, std::string> p = {
      {"set-tiny", R"(
[env]
kind = set
universe = 6
target_size = 3
beta = 1.0
seed = 7
[model]
hidden = 64
layers = 2
[objective]
kind = fl-db
[exploration]
epsilon = 0.05
[optimizer]
policy_lr = 0.001
logz_lr = 0.1
[train]
batch = 16
budget = 50000
metric_every = 1000
)"},
      {"set-small", R"(
[env]
kind = set
universe = 30
target_size = 20
beta = 1.0
seed = 7
[model]
hidden = 256
layers = 2
[objective]
kind = fl-db
[exploration]
epsilon = 0.05
[optimizer]
policy_lr = 0.001
logz_lr = 0.1
[train]
batch = 16
budget = 200000
metric_every = 1000
[eval]
mode_energy_margin = 2.0
)"},
      {"set-medium", R"(
[env]
kind = set
universe = 80
target_size = 60
beta = 1.0
seed = 7
[model]
hidden = 256
layers = 2
[objective]
kind = fl-db
[exploration]
epsilon = 0.05
[optimizer]
policy_lr = 0.001
logz_lr = 0.1
[train]
batch = 16
budget = 200000
metric_every = 1000
[eval]
mode_energy_margin = 2.0
)"},
      {"set-large", R"(
[env]
kind = set
universe = 100
target_size = 80
beta = 1.0
seed = 7
[model]
hidden = 256
layers = 2
[objective]
kind = fl-db
[exploration]
epsilon = 0.05
[optimizer]
policy_lr = 0.001
logz_lr = 0.1
[train]
batch = 16
budget = 1000000
metric_every = 1000
[eval]
mode_energy_margin = 2.0
)"},
      {"bits-tiny", R"(
[env]
kind = bits
n = 20
k = 4
beta = 3.0
seed = 11
num_modes = 8
[model]
hidden = 128
layers = 2
[objective]
kind = fl-db
[exploration]
epsilon = 0.0005
[optimizer]
policy_lr = 0.005
policy_lr_tb = 0.0001
logz_lr = 0.001
[train]
batch = 16
budget = 500000
metric_every = 1000
[eval]
mode_radius = 0
)"},
      {"bits-normal", R"(
[env]
kind = bits
n = 120
k = 4
beta = 3.0
seed = 11
num_modes = 60
[model]
hidden = 256
layers = 2
[objective]
kind = fl-db
[exploration]
epsilon = 0.0005
[optimizer]
policy_lr = 0.005
policy_lr_tb = 0.0001
logz_lr = 0.001
[train]
batch = 16
budget = 1000000
metric_every = 1000
[eval]
mode_radius = 0
)"},
      {"bits-long", R"(
[env]
kind = bits
n = 140
k = 4
beta = 3.0
seed = 11
num_modes = 60
[model]
hidden = 256
layers = 2
[objective]
kind = fl-db
[exploration]
epsilon = 0.0005
[optimizer]
policy_lr = 0.005
policy_lr_tb = 0.0001
logz_lr = 0.001
[train]
batch = 16
budget = 1000000
metric_every = 1000
[eval]
mode_radius = 0
)"},
      {"bits-verylong", R"(
[env]
kind = bits
n = 160
k = 4
beta = 3.0
seed = 11
num_modes = 60
[model]
hidden = 256
layers = 2
[objective]
kind = fl-db
[exploration]
epsilon = 0.0005
[optimizer]
policy_lr = 0.005
policy_lr_tb = 0.0001
logz_lr = 0.001
[train]
batch = 16
budget = 1000000
metric_every = 1000
[eval]
mode_radius = 0
)"},
  };
  return p;
}

inline ParsedConfig parse_preset(const std::string& name) {
  auto it = presets().find(name);
  if (it == presets().end()) throw ConfigError("unknown preset: " + name);
  return parse_config_text(it->second, "preset:" + name);
}

}  // namespace gfn
