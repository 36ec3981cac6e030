#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "survfuse/cohort.hpp"
#include "survfuse/model.hpp"
#include "survfuse/runtime.hpp"

namespace survfuse {

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GeneratorConfig& config);

// Everything a CLI run can be configured with.
struct RunConfig {
  TrainConfig train;
  GeneratorConfig generator;
  std::string cohort;
  std::string out_dir = ".";
  std::string checkpoint;
  std::string resume;
  int folds = 5;
  int fold = -1;  // -1: hold out the fold below, or run all with cv
  bool cv = false;
  bool svg = false;
  double fd_step = 1e-4;
  double fd_tol = 1e-4;
  int fd_samples = 40;
  bool fd_self_test = false;
};

// One flat configuration key. `group` selects the subcommands offering it
// as a flag.
struct ConfigKey {
  std::string name;           // snake_case, as in config files
  std::vector<std::string> aliases;  // extra flag names without dashes
  std::string group;          // "train", "generator", "paths", "gradcheck"
  std::string help;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();
const ConfigKey* find_config_key(std::string_view name);

// "learning_rate" -> "learning-rate"
std::string kebab_case(std::string_view snake);

// Sets one key from its textual value. Throws ConfigError for unknown keys
// or unparsable values.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

// Applies a flat JSON object; unknown keys raise ConfigError.
void apply_config_json(RunConfig& config, const nlohmann::json& j);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

}  // namespace survfuse
