#pragma once

// JSON (de)serialization of run configuration. Parsing is strict: unknown
// keys and wrongly typed values raise ConfigError, and absent keys keep
// their defaults.

#include "h2iad/train.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace h2iad {

nlohmann::json to_json(const TasmConfig& config);
nlohmann::json to_json(const TrainConfig& config);

// Applies the keys present in `j` on top of `base`.
TasmConfig tasm_config_from_json(const nlohmann::json& j, TasmConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// Everything a CLI run needs besides flags: training configuration plus the
// data/output paths and the normal category. Keys: every TrainConfig key,
// "tasm", "data", "out".
struct RunConfig {
  TrainConfig train;
  std::string data;
  std::string out;
};

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
nlohmann::json to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

// Hex CRC-32 of the canonical JSON dump.
std::string config_fingerprint(const nlohmann::json& j);

}  // namespace h2iad
