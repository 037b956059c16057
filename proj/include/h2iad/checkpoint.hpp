#pragma once

// Single-file checkpoint container:
//   "H2IADCK1" | u64 LE manifest size | manifest JSON | float32 LE payloads
// The manifest lists every parameter (name, shape, dtype, offset, byte count,
// CRC-32) in payload order, together with the full training configuration
// and loss history.

#include "h2iad/train.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace h2iad {

std::string serialize_checkpoint(const TrainedModel& model);
// Throws CheckpointError on any integrity or shape inconsistency.
TrainedModel deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

// Parses only the manifest of a serialized checkpoint.
nlohmann::json read_manifest(std::string_view bytes);

}  // namespace h2iad
