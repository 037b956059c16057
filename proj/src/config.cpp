#include "h2iad/config.hpp"

#include "h2iad/error.hpp"

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <set>

namespace h2iad {

using json = nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    const auto& v = j.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(std::string(key) + " must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(std::string(key) + " must be an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(std::string(key) + " must be a number");
    } else {
      if (!v.is_string()) throw ConfigError(std::string(key) + " must be a string");
    }
    out = v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid value for ") + key + ": " + e.what());
  }
}

}  // namespace

json to_json(const TasmConfig& c) {
  return {{"units", c.units},          {"width", c.width},
          {"frames", c.frames},        {"joints", c.joints},
          {"pe_mode", pe_mode_name(c.pe_mode)}, {"use_drem", c.use_drem},
          {"share_params", c.share_params}, {"heads", c.heads}};
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"initial_lr", c.initial_lr},
          {"final_lr", c.final_lr},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"normal_category", c.normal_category},
          {"grad_clip", c.grad_clip},
          {"holdout_fraction", c.holdout_fraction},
          {"flow_layers", c.flow_layers},
          {"flow_slope_init", c.flow_slope_init},
          {"tasm", to_json(c.tasm)}};
}

TasmConfig tasm_config_from_json(const json& j, TasmConfig c) {
  reject_unknown(j,
                 {"units", "width", "frames", "joints", "pe_mode", "use_drem", "share_params",
                  "heads"},
                 "tasm config");
  read(j, "units", c.units);
  read(j, "width", c.width);
  read(j, "frames", c.frames);
  read(j, "joints", c.joints);
  read(j, "use_drem", c.use_drem);
  read(j, "share_params", c.share_params);
  read(j, "heads", c.heads);
  if (j.contains("pe_mode")) {
    std::string mode;
    read(j, "pe_mode", mode);
    c.pe_mode = parse_pe_mode(mode);
  }
  if (c.joints < 0) throw ConfigError("tasm.joints must be >= 0");
  return c;
}

namespace {

const std::set<std::string> kTrainKeys = {"epochs",    "initial_lr",       "final_lr",
                                          "batch_size", "seed",            "normal_category",
                                          "grad_clip", "holdout_fraction", "flow_layers", "flow_slope_init",
                                          "tasm"};

void apply_train_keys(const json& j, TrainConfig& c) {
  read(j, "epochs", c.epochs);
  read(j, "initial_lr", c.initial_lr);
  read(j, "final_lr", c.final_lr);
  read(j, "batch_size", c.batch_size);
  read(j, "normal_category", c.normal_category);
  read(j, "grad_clip", c.grad_clip);
  read(j, "holdout_fraction", c.holdout_fraction);
  read(j, "flow_layers", c.flow_layers);
  read(j, "flow_slope_init", c.flow_slope_init);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
      throw ConfigError("seed must be an integer");
    if (j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() < 0)
      throw ConfigError("seed must be non-negative");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("tasm")) c.tasm = tasm_config_from_json(j["tasm"], c.tasm);
}

}  // namespace

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  reject_unknown(j, kTrainKeys, "train config");
  apply_train_keys(j, c);
  return c;
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
  std::set<std::string> allowed = kTrainKeys;
  allowed.insert({"data", "out"});
  reject_unknown(j, allowed, "run config");
  apply_train_keys(j, c.train);
  read(j, "data", c.data);
  read(j, "out", c.out);
  return c;
}

json to_json(const RunConfig& c) {
  json j = to_json(c.train);
  j["data"] = c.data;
  j["out"] = c.out;
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

std::string config_fingerprint(const json& j) {
  const std::string text = j.dump();
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(text.data()),
                         static_cast<uInt>(text.size()));
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

}  // namespace h2iad
