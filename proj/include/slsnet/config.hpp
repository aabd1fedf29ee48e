#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "slsnet/networks.hpp"
#include "slsnet/optim.hpp"

namespace slsnet {

/// Everything a training run depends on. Serialised into checkpoints so a
/// checkpoint alone can rebuild its models.
struct TrainConfig {
  ModelConfig model;
  OptimizerConfig optimizer;
  std::size_t batch_size = 8;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;         // 0: no step limit
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 500;
  bool augment = false;              // 8x flip/gamma/CLAHE expansion of the training set
  std::string precision = "double";  // must match the build
  std::size_t early_stopping = 0;    // patience in validations, 0 disables
  std::size_t validate_every = 0;    // steps between validations, 0: once per epoch

  void validate() const;
};

/// Applies one `key = value` assignment. Throws ConfigError for unknown keys
/// or malformed values.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Parses `key = value` lines; `#` starts a comment.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

/// Canonical text form, readable by parse_config. Round-trips exactly.
std::string to_config_text(const TrainConfig& cfg);

}  // namespace slsnet
