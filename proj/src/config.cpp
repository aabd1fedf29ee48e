#include "slsnet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "slsnet/error.hpp"

namespace slsnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("bad value for " + key + ": '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

template <class T>
std::string format_number(T v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Field {
  const char* key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <class T>
Field number(const char* key, T TrainConfig::*member) {
  return {key, [key, member](TrainConfig& c, const std::string& v) { c.*member = parse_number<T>(key, v); },
          [member](const TrainConfig& c) { return format_number(c.*member); }};
}

template <class S, class T>
Field nested(const char* key, S TrainConfig::*outer, T S::*inner) {
  return {key,
          [key, outer, inner](TrainConfig& c, const std::string& v) {
            (c.*outer).*inner = parse_number<T>(key, v);
          },
          [outer, inner](const TrainConfig& c) { return format_number((c.*outer).*inner); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      nested("input_size", &TrainConfig::model, &ModelConfig::input_size),
      nested("base_channels", &TrainConfig::model, &ModelConfig::base_channels),
      nested("down1_channels", &TrainConfig::model, &ModelConfig::down1_channels),
      nested("stage1_channels", &TrainConfig::model, &ModelConfig::stage1_channels),
      nested("stage2_channels", &TrainConfig::model, &ModelConfig::stage2_channels),
      nested("decoder1_channels", &TrainConfig::model, &ModelConfig::decoder1_channels),
      nested("disc_channels", &TrainConfig::model, &ModelConfig::disc_channels),
      nested("n_fcm_stage1", &TrainConfig::model, &ModelConfig::n_fcm_stage1),
      nested("n_fcm_stage2", &TrainConfig::model, &ModelConfig::n_fcm_stage2),
      nested("n_fcm_decoder", &TrainConfig::model, &ModelConfig::n_fcm_decoder),
      nested("dropout_rate", &TrainConfig::model, &ModelConfig::dropout_rate),
      nested("loss_lambda", &TrainConfig::model, &ModelConfig::loss_lambda),
      nested("loss_alpha", &TrainConfig::model, &ModelConfig::loss_alpha),
      nested("scale_factor", &TrainConfig::model, &ModelConfig::scale_factor),
      nested("lr", &TrainConfig::optimizer, &OptimizerConfig::lr),
      nested("beta1", &TrainConfig::optimizer, &OptimizerConfig::beta1),
      nested("beta2", &TrainConfig::optimizer, &OptimizerConfig::beta2),
      nested("eps", &TrainConfig::optimizer, &OptimizerConfig::eps),
      number("batch_size", &TrainConfig::batch_size),
      number("epochs", &TrainConfig::epochs),
      number("max_steps", &TrainConfig::max_steps),
      number("seed", &TrainConfig::seed),
      number("checkpoint_every", &TrainConfig::checkpoint_every),
      {"augment",
       [](TrainConfig& c, const std::string& v) { c.augment = parse_bool("augment", v); },
       [](const TrainConfig& c) { return std::string(c.augment ? "true" : "false"); }},
      {"precision", [](TrainConfig& c, const std::string& v) { c.precision = v; },
       [](const TrainConfig& c) { return c.precision; }},
      number("early_stopping", &TrainConfig::early_stopping),
      number("validate_every", &TrainConfig::validate_every),
  };
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  optimizer.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (epochs == 0 && max_steps == 0) throw ConfigError("one of epochs or max_steps must be positive");
  if (precision != "double" && precision != "float") {
    throw ConfigError("precision must be 'double' or 'float', got '" + precision + "'");
  }
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_config_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace slsnet
