#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ascent/dataset.hpp"
#include "ascent/model.hpp"
#include "ascent/training.hpp"

namespace ascent {

// Flat key=value config with [section] headers. Keys are stored fully
// qualified as "section.key"; keys before any header have no prefix.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::istream& in) {
    KeyValueConfig cfg;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = trim(line);
      if (s.empty() || s[0] == '#' || s[0] == ';') continue;
      if (s.front() == '[') {
        if (s.back() != ']') {
          throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
        }
        section = trim(s.substr(1, s.size() - 2));
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      }
      std::string key = trim(s.substr(0, eq));
      std::string value = trim(s.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
      }
      if (!section.empty()) key = section + "." + key;
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static KeyValueConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    return parse(in);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': expected number, got '" + it->second + "'");
    }
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      long long v = std::stoll(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': expected integer, got '" + it->second + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "off" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
  }

  std::map<std::string, std::string> values_;
};

struct RunConfig {
  ExperimentSetting setting = trajair_11s_setting();
  ModelConfig model;
  TrainConfig train;

  std::string coordinate_mode = "local";  // local | global
  std::string train_path;
  std::string val_path;
  std::string test_path;
  std::string split = "default";  // S1..S4 | default
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  // Messages produced while normalizing contradictory ablation flags.
  std::vector<std::string> warnings;
};

// Resolves setting name, config file, and flag-style overrides into a
// RunConfig. Contradictory ablation combinations are normalized with a
// recorded warning: global coordinates force both normalization flags off.
inline RunConfig resolve_run_config(const KeyValueConfig& cfg) {
  RunConfig run;

  const std::string setting_name = cfg.get_string("setting", "trajair-11s");
  if (auto named = named_setting(setting_name)) {
    run.setting = *named;
  } else {
    throw ConfigError("unknown setting name: " + setting_name);
  }
  run.setting.history_seconds = cfg.get_double("data.history_seconds", run.setting.history_seconds);
  run.setting.history_rate = cfg.get_double("data.history_rate", run.setting.history_rate);
  run.setting.future_seconds = cfg.get_double("data.future_seconds", run.setting.future_seconds);
  run.setting.future_rate = cfg.get_double("data.future_rate", run.setting.future_rate);
  run.setting.base_rate = cfg.get_double("data.base_rate", run.setting.base_rate);
  run.setting.stride = std::size_t(cfg.get_int("data.stride", (long long)run.setting.stride));
  run.setting.k = std::size_t(cfg.get_int("data.k", (long long)run.setting.k));
  run.setting.history_steps_override = std::size_t(
      cfg.get_int("data.history_steps", (long long)run.setting.history_steps_override));
  run.setting.future_steps_override = std::size_t(
      cfg.get_int("data.future_steps", (long long)run.setting.future_steps_override));

  run.model.d = std::size_t(cfg.get_int("model.d", (long long)run.model.d));
  run.model.n_blocks = std::size_t(cfg.get_int("model.n_blocks", (long long)run.model.n_blocks));
  run.model.n_heads = std::size_t(cfg.get_int("model.n_heads", (long long)run.model.n_heads));
  run.model.k = run.setting.k;
  run.model.t_h = run.setting.t_h();
  run.model.t_f = run.setting.t_f();
  run.model.dt_out = run.setting.dt_out();
  run.model.pose_scale = cfg.get_double("model.pose_scale", run.model.pose_scale);
  run.model.positional_normalization =
      cfg.get_bool("ablation.positional_normalization", run.model.positional_normalization);
  run.model.angular_normalization =
      cfg.get_bool("ablation.angular_normalization", run.model.angular_normalization);
  run.model.use_pose_embedding =
      cfg.get_bool("ablation.pose_embeddings", run.model.use_pose_embedding);
  run.model.flight_params = cfg.get_bool("ablation.flight_params", run.model.flight_params);
  run.model.softplus_speed = cfg.get_bool("model.softplus_speed", run.model.softplus_speed);

  run.coordinate_mode = cfg.get_string("ablation.coordinate_mode", run.coordinate_mode);
  if (run.coordinate_mode != "local" && run.coordinate_mode != "global") {
    throw ConfigError("ablation.coordinate_mode must be 'local' or 'global'");
  }
  if (run.coordinate_mode == "global" &&
      (run.model.positional_normalization || run.model.angular_normalization)) {
    run.warnings.push_back(
        "global coordinate mode ignores normalization flags; forcing both off");
    run.model.positional_normalization = false;
    run.model.angular_normalization = false;
  }

  run.train.epochs = std::size_t(cfg.get_int("train.epochs", (long long)run.train.epochs));
  run.train.batch_size =
      std::size_t(cfg.get_int("train.batch_size", (long long)run.train.batch_size));
  run.train.lr = cfg.get_double("train.lr", run.train.lr);
  run.train.beta_smooth_l1 = cfg.get_double("train.smooth_l1_beta", run.train.beta_smooth_l1);
  run.train.w_regression = cfg.get_double("train.w_regression", run.train.w_regression);
  run.train.w_classification =
      cfg.get_double("train.w_classification", run.train.w_classification);
  run.train.grad_clip_norm = cfg.get_double("train.grad_clip_norm", run.train.grad_clip_norm);
  run.train.wta_use_fde = cfg.get_bool("train.wta_use_fde", run.train.wta_use_fde);
  if (cfg.has("train.lr_milestones")) {
    run.train.lr_milestones.clear();
    std::stringstream ss(cfg.get_string("train.lr_milestones", ""));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) run.train.lr_milestones.push_back(std::size_t(std::stoull(tok)));
    }
  }

  run.seed = std::uint64_t(cfg.get_int("seed", 0));
  run.train.seed = std::uint64_t(cfg.get_int("train.seed", (long long)run.seed));
  run.train_path = cfg.get_string("data.train_path", "");
  run.val_path = cfg.get_string("data.val_path", "");
  run.test_path = cfg.get_string("data.test_path", "");
  run.split = cfg.get_string("data.split", run.split);
  run.out_dir = cfg.get_string("out", run.out_dir);

  run.model.validate();
  run.train.validate();
  return run;
}

// Frozen copy of a resolved run; re-parsing it reproduces the same RunConfig.
inline std::string serialize_run_config(const RunConfig& run) {
  std::ostringstream out;
  out.precision(17);
  out << "setting = " << run.setting.name << "\n";
  out << "seed = " << run.seed << "\n";
  out << "out = " << run.out_dir << "\n";
  out << "\n[data]\n";
  out << "history_seconds = " << run.setting.history_seconds << "\n";
  out << "history_rate = " << run.setting.history_rate << "\n";
  out << "future_seconds = " << run.setting.future_seconds << "\n";
  out << "future_rate = " << run.setting.future_rate << "\n";
  out << "base_rate = " << run.setting.base_rate << "\n";
  out << "stride = " << run.setting.stride << "\n";
  out << "k = " << run.setting.k << "\n";
  out << "history_steps = " << run.setting.history_steps_override << "\n";
  out << "future_steps = " << run.setting.future_steps_override << "\n";
  if (!run.train_path.empty()) out << "train_path = " << run.train_path << "\n";
  if (!run.val_path.empty()) out << "val_path = " << run.val_path << "\n";
  if (!run.test_path.empty()) out << "test_path = " << run.test_path << "\n";
  out << "split = " << run.split << "\n";
  out << "\n[model]\n";
  out << "d = " << run.model.d << "\n";
  out << "n_blocks = " << run.model.n_blocks << "\n";
  out << "n_heads = " << run.model.n_heads << "\n";
  out << "pose_scale = " << run.model.pose_scale << "\n";
  out << "softplus_speed = " << (run.model.softplus_speed ? "true" : "false") << "\n";
  out << "\n[ablation]\n";
  out << "coordinate_mode = " << run.coordinate_mode << "\n";
  out << "positional_normalization = "
      << (run.model.positional_normalization ? "true" : "false") << "\n";
  out << "angular_normalization = " << (run.model.angular_normalization ? "true" : "false")
      << "\n";
  out << "pose_embeddings = " << (run.model.use_pose_embedding ? "true" : "false") << "\n";
  out << "flight_params = " << (run.model.flight_params ? "true" : "false") << "\n";
  out << "\n[train]\n";
  out << "epochs = " << run.train.epochs << "\n";
  out << "batch_size = " << run.train.batch_size << "\n";
  out << "lr = " << run.train.lr << "\n";
  out << "lr_milestones = ";
  for (std::size_t i = 0; i < run.train.lr_milestones.size(); ++i) {
    if (i) out << ",";
    out << run.train.lr_milestones[i];
  }
  out << "\n";
  out << "smooth_l1_beta = " << run.train.beta_smooth_l1 << "\n";
  out << "w_regression = " << run.train.w_regression << "\n";
  out << "w_classification = " << run.train.w_classification << "\n";
  out << "grad_clip_norm = " << run.train.grad_clip_norm << "\n";
  out << "wta_use_fde = " << (run.train.wta_use_fde ? "true" : "false") << "\n";
  out << "seed = " << run.train.seed << "\n";
  return out.str();
}

}  // namespace ascent
