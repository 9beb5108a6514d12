#include "pclreid/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "pclreid/errors.hpp"

namespace pclreid {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& v, std::uint64_t min) {
  if (!v.empty() && v[0] == '-') throw ConfigError(key, "must be >= " + std::to_string(min) + ", got " + v);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  }
  if (out < min) throw ConfigError(key, "must be >= " + std::to_string(min) + ", got " + v);
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty() || !std::isfinite(out)) {
    throw ConfigError(key, "expected a finite real number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

std::string real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string boolean(bool v) { return v ? "true" : "false"; }

struct KeyDef {
  std::string name;
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
KeyDef count_key(std::string name, T TrainConfig::*field, std::uint64_t min) {
  return {std::move(name),
          [field, min](TrainConfig& c, const std::string& k, const std::string& v) {
            c.*field = static_cast<T>(parse_uint(k, v, min));
          },
          [field](const TrainConfig& c) { return std::to_string(c.*field); }};
}

KeyDef real_key(std::string name, double TrainConfig::*field) {
  return {std::move(name),
          [field](TrainConfig& c, const std::string& k, const std::string& v) {
            c.*field = parse_real(k, v);
          },
          [field](const TrainConfig& c) { return real(c.*field); }};
}

KeyDef bool_key(std::string name, bool TrainConfig::*field) {
  return {std::move(name),
          [field](TrainConfig& c, const std::string& k, const std::string& v) {
            c.*field = parse_bool(k, v);
          },
          [field](const TrainConfig& c) { return boolean(c.*field); }};
}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      count_key("epochs", &TrainConfig::epochs, 0),
      count_key("iters", &TrainConfig::iters_per_epoch, 1),
      count_key("ids-per-batch", &TrainConfig::ids_per_batch, 1),
      count_key("instances-per-id", &TrainConfig::instances_per_id, 1),
      real_key("lr", &TrainConfig::base_lr),
      real_key("wd", &TrainConfig::weight_decay),
      {"schedule",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         if (v == "step") c.schedule = Schedule::step;
         else if (v == "warmup") c.schedule = Schedule::warmup;
         else throw ConfigError(k, "unknown schedule '" + v + "' (expected step or warmup)");
       },
       [](const TrainConfig& c) { return to_string(c.schedule); }},
      real_key("mu", &TrainConfig::momentum),
      real_key("tau", &TrainConfig::temperature),
      {"momentum-convention",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         if (v == "old") c.momentum_convention = MomentumConvention::old_centroid;
         else if (v == "new") c.momentum_convention = MomentumConvention::new_feature;
         else throw ConfigError(k, "expected old or new, got '" + v + "'");
       },
       [](const TrainConfig& c) { return to_string(c.momentum_convention); }},
      {"bank-update",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         if (v == "sample") c.bank_update = BankUpdate::per_sample;
         else if (v == "batch-mean") c.bank_update = BankUpdate::batch_mean;
         else throw ConfigError(k, "expected sample or batch-mean, got '" + v + "'");
       },
       [](const TrainConfig& c) { return to_string(c.bank_update); }},
      bool_key("fixed-bank", &TrainConfig::fixed_bank),
      {"loss",
       [](TrainConfig& c, const std::string&, const std::string& v) {
         c.losses = parse_loss_weights(v);
       },
       [](const TrainConfig& c) { return format_loss_weights(c.losses); }},
      real_key("label-smoothing", &TrainConfig::label_smoothing),
      real_key("margin", &TrainConfig::triplet_margin),
      real_key("eps", &TrainConfig::eps),
      count_key("min-samples", &TrainConfig::min_samples, 1),
      count_key("seed", &TrainConfig::seed, 0),
      {"freeze-layer1",
       [](TrainConfig& c, const std::string& k, const std::string& v) {
         if (v == "auto") c.freeze_layer1.reset();
         else c.freeze_layer1 = parse_bool(k, v);
       },
       [](const TrainConfig& c) {
         return c.freeze_layer1 ? boolean(*c.freeze_layer1) : std::string("auto");
       }},
      bool_key("freeze-projection", &TrainConfig::freeze_projection),
      bool_key("calibrate-bn", &TrainConfig::calibrate_bn),
      count_key("hidden-dim", &TrainConfig::hidden_dim, 1),
      count_key("proj-dim", &TrainConfig::projection_dim, 1),
      real_key("stage1-lr", &TrainConfig::stage1_lr),
      real_key("stage1-tau", &TrainConfig::stage1_temperature),
      count_key("stage1-steps", &TrainConfig::stage1_steps, 0),
      bool_key("camera-filtering", &TrainConfig::camera_filtering),
  };
  return table;
}

}  // namespace

std::string to_string(Schedule s) { return s == Schedule::step ? "step" : "warmup"; }

std::string to_string(BankUpdate b) {
  return b == BankUpdate::per_sample ? "sample" : "batch-mean";
}

std::string to_string(MomentumConvention c) {
  return c == MomentumConvention::old_centroid ? "old" : "new";
}

LossConfig TrainConfig::loss_config() const {
  return {temperature, label_smoothing, triplet_margin, losses};
}

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("lr", "must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("wd", "must be >= 0");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("mu", "must lie in [0, 1]");
  if (!(eps > 0.0 && eps <= 2.0)) throw ConfigError("eps", "must lie in (0, 2]");
  if (!(stage1_lr > 0.0)) throw ConfigError("stage1-lr", "must be positive");
  if (!(stage1_temperature > 0.0)) throw ConfigError("stage1-tau", "must be positive");
  if (iters_per_epoch < 1) throw ConfigError("iters", "must be >= 1");
  if (min_samples < 1) throw ConfigError("min-samples", "must be >= 1");
  if (hidden_dim < 1) throw ConfigError("hidden-dim", "must be >= 1");
  if (projection_dim < 1) throw ConfigError("proj-dim", "must be >= 1");
  if (ids_per_batch < 1) throw ConfigError("ids-per-batch", "must be >= 1");
  if (instances_per_id < 1) throw ConfigError("instances-per-id", "must be >= 1");
  loss_config().validate();
  if (losses.triplet > 0.0) {
    if (ids_per_batch < 2) throw ConfigError("ids-per-batch", "must be >= 2 with the triplet loss");
    if (instances_per_id < 2) {
      throw ConfigError("instances-per-id", "must be >= 2 with the triplet loss");
    }
  }
  if (ids_per_batch * instances_per_id < 2) {
    throw ConfigError("ids-per-batch", "batch must hold at least 2 samples for batch norm");
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& k : key_table()) out.push_back(k.name);
    return out;
  }();
  return keys;
}

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : key_table()) {
    if (k.name == key) {
      k.set(config, key, trim(value));
      return;
    }
  }
  throw ConfigError(key, "unknown configuration key");
}

TrainConfig parse_config(const std::string& text, const TrainConfig& base) {
  TrainConfig config = base;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("", "line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    set_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  config.validate();
  return config;
}

TrainConfig parse_config_file(const std::filesystem::path& path, const TrainConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), base);
}

std::string serialize_config(const TrainConfig& config) {
  std::string out;
  for (const auto& k : key_table()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

}  // namespace pclreid
