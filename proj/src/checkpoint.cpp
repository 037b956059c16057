#include "h2iad/checkpoint.hpp"

#include "h2iad/config.hpp"
#include "h2iad/error.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace h2iad {

using json = nlohmann::json;

namespace {

constexpr std::string_view kMagic = "H2IADCK1";
constexpr std::size_t kHeaderSize = 16;

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32_le(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

std::uint64_t get_u64_le(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

unsigned long crc_of(std::string_view bytes) {
  return crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
}

std::string encode_payload(const nn::Matrix& m) {
  std::string out;
  out.reserve(static_cast<std::size_t>(m.size()) * 4);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    put_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[i])));
  return out;
}

}  // namespace

std::string serialize_checkpoint(const TrainedModel& trained) {
  const auto& params = trained.model.params();
  json tensors = json::array();
  std::string payload;
  for (const auto& p : params.entries()) {
    const std::string bytes = encode_payload(p.value);
    tensors.push_back({{"name", p.name},
                       {"shape", {p.value.rows(), p.value.cols()}},
                       {"dtype", "float32"},
                       {"offset", payload.size()},
                       {"bytes", bytes.size()},
                       {"crc32", crc_of(bytes)}});
    payload += bytes;
  }
  json manifest = {{"format", "h2iad-checkpoint"},
                   {"version", 1},
                   {"config", to_json(trained.config())},
                   {"loss_history", trained.loss_history},
                   {"holdout_history", trained.holdout_history},
                   {"final_nll", trained.final_nll},
                   {"payload_bytes", payload.size()},
                   {"tensors", std::move(tensors)}};
  const std::string text = manifest.dump();

  std::string out(kMagic);
  const auto size = static_cast<std::uint64_t>(text.size());
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((size >> (8 * i)) & 0xFF));
  out += text;
  out += payload;
  return out;
}

json read_manifest(std::string_view bytes) {
  if (bytes.size() < kHeaderSize || bytes.substr(0, kMagic.size()) != kMagic)
    throw CheckpointError("not a checkpoint file (bad magic)");
  const std::uint64_t size = get_u64_le(bytes.data() + kMagic.size());
  if (size > bytes.size() - kHeaderSize) throw CheckpointError("truncated checkpoint manifest");
  try {
    return json::parse(bytes.substr(kHeaderSize, static_cast<std::size_t>(size)));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupted checkpoint manifest: ") + e.what());
  }
}

TrainedModel deserialize_checkpoint(std::string_view bytes) {
  const json manifest = read_manifest(bytes);
  const std::size_t payload_start = kHeaderSize + get_u64_le(bytes.data() + kMagic.size());
  const std::string_view payload = bytes.substr(payload_start);

  TrainConfig config;
  std::vector<double> history, holdout;
  double final_nll = 0.0;
  json tensors;
  std::size_t declared = 0;
  try {
    if (manifest.at("format") != "h2iad-checkpoint" || manifest.at("version") != 1)
      throw CheckpointError("unsupported checkpoint format/version");
    config = train_config_from_json(manifest.at("config"));
    history = manifest.at("loss_history").get<std::vector<double>>();
    holdout = manifest.at("holdout_history").get<std::vector<double>>();
    final_nll = manifest.at("final_nll").get<double>();
    tensors = manifest.at("tensors");
    declared = manifest.at("payload_bytes").get<std::size_t>();
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("incomplete checkpoint manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("invalid checkpoint config: ") + e.what());
  }
  if (declared != payload.size())
    throw CheckpointError("payload is " + std::to_string(payload.size()) +
                          " bytes, manifest declares " + std::to_string(declared));

  TrainedModel out{Model(config), std::move(history), std::move(holdout), final_nll};
  auto& entries = out.model.params().entries();
  if (!tensors.is_array() || tensors.size() != entries.size())
    throw CheckpointError("checkpoint lists " + std::to_string(tensors.size()) +
                          " tensors; configuration implies " + std::to_string(entries.size()));

  std::size_t cursor = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& param = entries[i];
    const json& t = tensors[i];
    try {
      const auto name = t.at("name").get<std::string>();
      const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
      const auto dtype = t.at("dtype").get<std::string>();
      const auto offset = t.at("offset").get<std::size_t>();
      const auto nbytes = t.at("bytes").get<std::size_t>();
      const auto crc = t.at("crc32").get<unsigned long>();
      if (name != param.name)
        throw CheckpointError("tensor " + std::to_string(i) + " is '" + name + "', expected '" +
                              param.name + "'");
      if (dtype != "float32") throw CheckpointError("tensor '" + name + "' has dtype " + dtype);
      if (shape.size() != 2 || shape[0] != param.value.rows() || shape[1] != param.value.cols())
        throw CheckpointError("tensor '" + name + "' shape disagrees with the configuration");
      if (nbytes != static_cast<std::size_t>(shape[0] * shape[1]) * 4 || offset != cursor ||
          offset + nbytes > payload.size())
        throw CheckpointError("tensor '" + name + "' byte range is inconsistent");
      const std::string_view raw = payload.substr(offset, nbytes);
      if (crc_of(raw) != crc)
        throw CheckpointError("tensor '" + name + "' failed its integrity check");
      for (Eigen::Index k = 0; k < param.value.size(); ++k)
        param.value.data()[k] =
            std::bit_cast<float>(get_u32_le(raw.data() + static_cast<std::size_t>(k) * 4));
      cursor += nbytes;
    } catch (const json::exception& e) {
      throw CheckpointError("malformed tensor entry " + std::to_string(i) + ": " + e.what());
    }
  }
  if (cursor != payload.size()) throw CheckpointError("trailing bytes after last tensor");
  return out;
}

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint '" + path.string() + "'");
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace h2iad
