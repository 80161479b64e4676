#pragma once

// Experiment configuration: a flat file of dotted `key = value` pairs.
// Parse -> serialize -> parse is the identity on the key/value map.

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "memlab/corpus/domains.hpp"
#include "memlab/model/config.hpp"
#include "memlab/train/trainer.hpp"

namespace memlab::report {

struct KvConfig {
  std::map<std::string, std::string> kv;

  static KvConfig parse(const std::string& text) {
    KvConfig c;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::string s = trim(line);
      if (s.empty() || s[0] == '#') continue;
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(line_no) + " has no '=': " + s);
      std::string key = trim(s.substr(0, eq));
      std::string val = trim(s.substr(eq + 1));
      if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + " has an empty key");
      c.kv[key] = val;
    }
    return c;
  }

  std::string serialize() const {
    std::ostringstream out;
    for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
    return out.str();
  }

  bool has(const std::string& key) const { return kv.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
  }

  std::string require(const std::string& key) const {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("config is missing required key: " + key);
    return it->second;
  }

  int64_t get_int(const std::string& key, int64_t fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
      return std::stoll(it->second);
    } catch (...) {
      throw ConfigError("config key " + key + " is not an integer: " + it->second);
    }
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (...) {
      throw ConfigError("config key " + key + " is not a number: " + it->second);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config key " + key + " is not a boolean: " + it->second);
  }
};

// "d64L3H4f256" -> ModelConfig dimensions.
inline ModelConfig parse_size_spec(const std::string& s, NormKind norm, PosKind pos, int vocab) {
  ModelConfig cfg;
  cfg.norm_kind = norm;
  cfg.positional_kind = pos;
  cfg.vocab_size = vocab;
  size_t pos_l = s.find('L'), pos_h = s.find('H'), pos_f = s.find('f');
  if (s.empty() || s[0] != 'd' || pos_l == std::string::npos || pos_h == std::string::npos ||
      pos_f == std::string::npos)
    throw ConfigError("bad size spec (want d<D>L<L>H<H>f<FF>): " + s);
  try {
    cfg.d_model = std::stoi(s.substr(1, pos_l - 1));
    cfg.n_layers = std::stoi(s.substr(pos_l + 1, pos_h - pos_l - 1));
    cfg.n_heads = std::stoi(s.substr(pos_h + 1, pos_f - pos_h - 1));
    cfg.d_ff = std::stoi(s.substr(pos_f + 1));
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    throw ConfigError("bad size spec: " + s);
  }
  cfg.validate();
  return cfg;
}

struct FamilySpec {
  std::string name;  // single letter, lowercase
  NormKind norm = NormKind::rms_norm;
  PosKind pos = PosKind::rotary;
  std::vector<ModelConfig> sizes;

  std::string tag(size_t index) const { return name + std::to_string(index + 1); }
};

// "1:30,2:6,16:12" -> (repetitions, count) pairs.
inline std::vector<std::pair<int, int>> parse_plan(const std::string& s) {
  std::vector<std::pair<int, int>> out;
  for (const auto& part : split(s, ',')) {
    if (trim(part).empty()) continue;
    auto colon = part.find(':');
    if (colon == std::string::npos) throw ConfigError("bad plant plan entry: " + part);
    out.emplace_back(std::stoi(trim(part.substr(0, colon))), std::stoi(trim(part.substr(colon + 1))));
  }
  if (out.empty()) throw ConfigError("empty plant plan: " + s);
  return out;
}

struct ExperimentConfig {
  uint64_t seed = 42;
  std::filesystem::path out_dir = "runs/out";
  int workers = 2;

  // corpus
  int64_t budget_tokens = 0;
  int min_line = 72, max_line = 96;
  std::map<std::string, std::string> plan_overrides;  // domain name -> plan string
  std::string default_plan = "1:30,2:6,4:6,8:5,16:12,32:4,64:2,128:1";
  bool periodic_plants = true;

  // training
  int steps = 1500, batch = 16, seq_len = 64, checkpoint_every = 0;
  train::LrSchedule lr;

  // families
  std::vector<FamilySpec> families;

  // noise
  std::vector<double> alphas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  int noise_layer = 0;

  // analysis caps (0 = unlimited)
  int probe_cap = 0;
  int compress_cap = 150;
  int cohort_cap = 400;
  int ablate_cap_small = 10000;
  int ablate_cap_large = 2500;
  int64_t large_threshold = 250000;
  int residual_norm_cap = 100;
  std::string reference;  // model tag the internal probes run on

  KvConfig raw;

  int ablate_cap_for(const ModelConfig& cfg) const {
    return cfg.param_count() > large_threshold ? ablate_cap_large : ablate_cap_small;
  }

  const FamilySpec& family(const std::string& name) const {
    for (const auto& f : families)
      if (f.name == name) return f;
    throw ConfigError("unknown family: " + name);
  }

  // Every (tag, config) in declaration order.
  std::vector<std::pair<std::string, ModelConfig>> all_models() const {
    std::vector<std::pair<std::string, ModelConfig>> out;
    for (const auto& f : families)
      for (size_t i = 0; i < f.sizes.size(); ++i) out.emplace_back(f.tag(i), f.sizes[i]);
    return out;
  }

  ModelConfig model_by_tag(const std::string& tag) const {
    for (const auto& [t, cfg] : all_models())
      if (t == tag) return cfg;
    throw ConfigError("unknown model tag: " + tag);
  }

  static ExperimentConfig from_kv(const KvConfig& kv) {
    ExperimentConfig c;
    c.raw = kv;
    c.seed = static_cast<uint64_t>(kv.get_int("seed", 42));
    c.out_dir = kv.get("out_dir", "runs/out");
    c.workers = static_cast<int>(kv.get_int("workers", 2));

    c.budget_tokens = kv.get_int("corpus.budget_tokens", 0);
    c.min_line = static_cast<int>(kv.get_int("corpus.min_line", 72));
    c.max_line = static_cast<int>(kv.get_int("corpus.max_line", 96));
    c.default_plan = kv.get("corpus.plan", c.default_plan);
    c.periodic_plants = kv.get_bool("corpus.periodic_plants", true);
    for (const auto& [key, val] : kv.kv)
      if (key.rfind("corpus.plan.", 0) == 0) c.plan_overrides[key.substr(12)] = val;

    c.steps = static_cast<int>(kv.get_int("train.steps", 1500));
    c.batch = static_cast<int>(kv.get_int("train.batch", 16));
    c.seq_len = static_cast<int>(kv.get_int("train.seq_len", 64));
    c.checkpoint_every = static_cast<int>(kv.get_int("train.checkpoint_every", 0));
    c.lr.peak = kv.get_double("train.lr_peak", 3e-3);
    c.lr.warmup = static_cast<int>(kv.get_int("train.warmup", 150));
    c.lr.decay = train::decay_from(kv.get("train.decay", "cosine"));

    corpus::CharTokenizer tok;
    for (const auto& [key, val] : kv.kv) {
      if (key.rfind("family.", 0) != 0 || !key.ends_with(".sizes")) continue;
      std::string name = key.substr(7, key.size() - 7 - 6);
      FamilySpec f;
      f.name = name;
      std::string recipe = kv.get("family." + name + ".recipe", "rms_norm/rotary");
      auto slash = recipe.find('/');
      if (slash == std::string::npos) throw ConfigError("bad family recipe (want norm/pos): " + recipe);
      f.norm = norm_kind_from(recipe.substr(0, slash));
      f.pos = pos_kind_from(recipe.substr(slash + 1));
      for (const auto& s : split(val, ','))
        f.sizes.push_back(parse_size_spec(trim(s), f.norm, f.pos, tok.vocab_size()));
      if (f.sizes.empty()) throw ConfigError("family " + name + " has no sizes");
      c.families.push_back(std::move(f));
    }
    if (c.families.empty()) throw ConfigError("config declares no model families");

    if (kv.has("noise.alphas")) {
      c.alphas.clear();
      for (const auto& a : split(kv.require("noise.alphas"), ',')) c.alphas.push_back(std::stod(trim(a)));
    }
    for (size_t i = 0; i < c.alphas.size(); ++i) {
      if (c.alphas[i] < 0.0 || c.alphas[i] > 0.5)
        throw ConfigError("noise alphas must lie in [0, 0.5]");
      if (i > 0 && c.alphas[i] <= c.alphas[i - 1])
        throw ConfigError("noise alphas must be strictly ascending");
    }
    c.noise_layer = static_cast<int>(kv.get_int("noise.layer", 0));

    c.probe_cap = static_cast<int>(kv.get_int("analysis.probe_cap", 0));
    c.compress_cap = static_cast<int>(kv.get_int("analysis.compress_cap", 150));
    c.cohort_cap = static_cast<int>(kv.get_int("analysis.cohort_cap", 400));
    c.ablate_cap_small = static_cast<int>(kv.get_int("analysis.ablate_cap_small", 10000));
    c.ablate_cap_large = static_cast<int>(kv.get_int("analysis.ablate_cap_large", 2500));
    c.large_threshold = kv.get_int("analysis.large_threshold", 250000);
    c.residual_norm_cap = static_cast<int>(kv.get_int("analysis.residual_norm_cap", 100));
    c.reference = kv.get("analysis.reference", c.families.front().tag(c.families.front().sizes.size() > 1 ? 1 : 0));
    c.model_by_tag(c.reference);  // must exist
    return c;
  }

  static ExperimentConfig load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    return from_kv(KvConfig::parse(read_file(path)));
  }
};

}  // namespace memlab::report
