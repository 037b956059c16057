#pragma once

// Two-stream interaction encoder. Each stream embeds one person's poses, adds
// a positional embedding and passes through N stacked units; every unit runs
// self-attention, motion cross-attention against the other stream, distance
// cross-attention against the embedded distance maps, and a feed-forward
// block. Pooled stream outputs are concatenated into the feature f.

#include "h2iad/autodiff.hpp"
#include "h2iad/data.hpp"
#include "h2iad/ddm.hpp"
#include "h2iad/params.hpp"
#include "h2iad/rng.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace h2iad {

enum class PeMode { kSynchronized, kUnsynchronized, kSinusoidal };

PeMode parse_pe_mode(std::string_view name);  // accepts sync/unsync aliases
std::string_view pe_mode_name(PeMode mode);

struct TasmConfig {
  int units = 8;    // N
  int width = 64;   // E
  int frames = 32;  // T
  int joints = 0;   // D; 0 = take from the dataset
  PeMode pe_mode = PeMode::kSynchronized;
  bool use_drem = true;
  bool share_params = true;
  int heads = 4;

  // Throws ConfigError. Requires joints > 0.
  void validate() const;
  bool operator==(const TasmConfig&) const = default;
};

// Fixed sinusoidal table, frames x width.
nn::Matrix sinusoidal_embedding(int frames, int width);

namespace tasm {

using nn::ParamId;
using nn::Var;
using Params = std::span<const Var>;

struct Linear {
  ParamId weight{};
  ParamId bias{};
  Var operator()(Params p, Var x) const;
  static Linear create(nn::ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                       std::vector<ParamId>& ids);
};

struct Norm {
  ParamId gain{};
  ParamId bias{};
  Var operator()(Params p, Var x) const;
  static Norm create(nn::ParamStore& store, const std::string& name, int width,
                     std::vector<ParamId>& ids);
};

struct AttentionBlock {
  Linear query, key, value, output;
  int heads = 1;
  Var operator()(Params p, Var query_source, Var key_value_source) const;
  static AttentionBlock create(nn::ParamStore& store, const std::string& name, int width,
                               int heads, Rng& rng, std::vector<ParamId>& ids);
};

struct Unit {
  Norm self_norm;
  AttentionBlock self_attention;
  Norm motion_norm;
  AttentionBlock motion_cross;
  // Distance branch; absent when DREM is disabled.
  std::optional<Linear> distance_in, distance_out;
  Norm distance_norm;
  AttentionBlock distance_cross;
  Norm ffn_norm;
  Linear ffn_in, ffn_out;
};

struct Stream {
  Linear pose_in, pose_out;
  std::vector<Unit> units;
  Norm out_norm;
  Linear out;
  std::vector<ParamId> ids;
};

}  // namespace tasm

class TasmEncoder {
 public:
  TasmEncoder(const TasmConfig& config, nn::ParamStore& store, Rng& rng);

  const TasmConfig& config() const { return config_; }

  // Per-frame pose MLP plus the stream's positional embedding row. `poses` is
  // T x 3D.
  nn::Var embed_poses(tasm::Params p, nn::Tape& tape, const nn::Matrix& poses, int stream) const;

  // Embeds the D x D distance maps (T x D^2) for one unit and stream.
  nn::Var embed_distances(tasm::Params p, nn::Var distance_maps, int unit, int stream) const;

  // One unit over both streams. `distance_maps` is the T x D^2 constant.
  std::pair<nn::Var, nn::Var> unit_forward(tasm::Params p, int unit, nn::Var fx, nn::Var fy,
                                           nn::Var distance_maps) const;

  // Per-stream pooled outputs (1 x E each) before concatenation.
  std::pair<nn::Var, nn::Var> stream_outputs(tasm::Params p, nn::Tape& tape,
                                             const nn::Matrix& x_poses, const nn::Matrix& y_poses,
                                             const nn::Matrix& distance_maps) const;

  // Fused feature, 1 x 2E: pooled x stream then pooled y stream.
  nn::Var forward(tasm::Params p, nn::Tape& tape, const nn::Matrix& x_poses,
                  const nn::Matrix& y_poses, const nn::Matrix& distance_maps) const;

  // Convenience: value-level forward on a pair whose length equals config T.
  Eigen::RowVectorXd encode(const nn::ParamStore& store, const InteractionPair& pair) const;

  // All encoder parameters (both streams and positional embeddings).
  const std::vector<nn::ParamId>& parameter_ids() const { return ids_; }
  std::size_t parameter_count(const nn::ParamStore& store) const;
  std::size_t stream_parameter_count(const nn::ParamStore& store, int stream) const;
  std::size_t positional_parameter_count(const nn::ParamStore& store) const;

  // True when both streams resolve to the same parameter set.
  bool streams_share_storage() const { return &stream(0) == &stream(1); }

 private:
  const tasm::Stream& stream(int s) const {
    return streams_[config_.share_params ? 0 : static_cast<std::size_t>(s)];
  }

  TasmConfig config_;
  std::vector<tasm::Stream> streams_;
  std::vector<nn::ParamId> positional_;
  nn::Matrix sinusoid_;
  std::vector<nn::ParamId> ids_;
};

// Converts model inputs to double precision matrices.
nn::Matrix to_matrix(const PoseMatrix& m);

}  // namespace h2iad
