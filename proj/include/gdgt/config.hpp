#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "gdgt/model.hpp"
#include "gdgt/training.hpp"

namespace gdgt {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a training run needs. The file form is JSON with the sections
/// "model", "train", "data" and "output"; every key is optional and unknown
/// keys are errors. The ablation switches live in "train".
struct RunConfig {
  GdgtConfig model;
  TrainConfig train;
  std::filesystem::path checkpoint = "gdgt.ckpt";
  /// Empty means the log goes to standard output.
  std::filesystem::path log;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

RunConfig parse_run_config(const std::string& text);
std::string serialize_run_config(const RunConfig& config);

/// Reads a config file. Relative data and output paths resolve against the
/// file's directory.
RunConfig load_run_config(const std::filesystem::path& path);

/// Model configuration including the ablation switches, as embedded in
/// checkpoints.
std::string model_config_to_json(const GdgtConfig& config);
GdgtConfig model_config_from_json(const std::string& text);

AblationConfig parse_ablation(const std::string& name);
std::string ablation_name(const AblationConfig& ablation);

}  // namespace gdgt
