#include "h2iad/tasm.hpp"

#include "h2iad/error.hpp"

#include <cmath>
#include <string>

namespace h2iad {

using nn::Matrix;
using nn::Var;

PeMode parse_pe_mode(std::string_view name) {
  if (name == "synchronized" || name == "sync") return PeMode::kSynchronized;
  if (name == "unsynchronized" || name == "unsync") return PeMode::kUnsynchronized;
  if (name == "sinusoidal") return PeMode::kSinusoidal;
  throw ConfigError("unknown positional embedding mode '" + std::string(name) + "'");
}

std::string_view pe_mode_name(PeMode mode) {
  switch (mode) {
    case PeMode::kSynchronized: return "synchronized";
    case PeMode::kUnsynchronized: return "unsynchronized";
    case PeMode::kSinusoidal: return "sinusoidal";
  }
  return "";
}

void TasmConfig::validate() const {
  if (units < 1) throw ConfigError("tasm.units must be >= 1");
  if (width < 1) throw ConfigError("tasm.width must be >= 1");
  if (heads < 1) throw ConfigError("tasm.heads must be >= 1");
  if (width % heads != 0) throw ConfigError("tasm.width must be divisible by tasm.heads");
  if (frames < 2) throw ConfigError("tasm.frames must be >= 2");
  if (joints < 1) throw ConfigError("tasm.joints must be >= 1");
}

Matrix sinusoidal_embedding(int frames, int width) {
  Matrix pe(frames, width);
  for (int t = 0; t < frames; ++t)
    for (int i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / width);
      pe(t, i) = (i % 2 == 0) ? std::sin(t * freq) : std::cos(t * freq);
    }
  return pe;
}

Matrix to_matrix(const PoseMatrix& m) { return m.cast<double>(); }

namespace tasm {

Var Linear::operator()(Params p, Var x) const {
  return nn::add(nn::matmul(x, p[weight]), p[bias]);
}

Linear Linear::create(nn::ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                      std::vector<ParamId>& ids) {
  Linear l;
  l.weight = store.add(name + ".weight", nn::uniform_matrix(in, out, 1.0 / std::sqrt(in), rng));
  l.bias = store.add(name + ".bias", Matrix::Zero(1, out));
  ids.push_back(l.weight);
  ids.push_back(l.bias);
  return l;
}

Var Norm::operator()(Params p, Var x) const { return nn::layer_norm(x, p[gain], p[bias], 1e-5); }

Norm Norm::create(nn::ParamStore& store, const std::string& name, int width,
                  std::vector<ParamId>& ids) {
  Norm n;
  n.gain = store.add(name + ".gain", Matrix::Ones(1, width));
  n.bias = store.add(name + ".bias", Matrix::Zero(1, width));
  ids.push_back(n.gain);
  ids.push_back(n.bias);
  return n;
}

Var AttentionBlock::operator()(Params p, Var query_source, Var key_value_source) const {
  Var q = query(p, query_source);
  Var k = key(p, key_value_source);
  Var v = value(p, key_value_source);
  return output(p, nn::attention(q, k, v, heads));
}

AttentionBlock AttentionBlock::create(nn::ParamStore& store, const std::string& name, int width,
                                      int heads, Rng& rng, std::vector<ParamId>& ids) {
  AttentionBlock a;
  a.query = Linear::create(store, name + ".query", width, width, rng, ids);
  a.key = Linear::create(store, name + ".key", width, width, rng, ids);
  a.value = Linear::create(store, name + ".value", width, width, rng, ids);
  a.output = Linear::create(store, name + ".output", width, width, rng, ids);
  a.heads = heads;
  return a;
}

}  // namespace tasm

namespace {

tasm::Stream make_stream(const TasmConfig& c, nn::ParamStore& store, const std::string& prefix,
                         Rng& rng) {
  using namespace tasm;
  Stream s;
  const int E = c.width;
  const int D = c.joints;
  s.pose_in = Linear::create(store, prefix + ".pose.0", 3 * D, E, rng, s.ids);
  s.pose_out = Linear::create(store, prefix + ".pose.1", E, E, rng, s.ids);
  for (int n = 0; n < c.units; ++n) {
    const std::string u = prefix + ".unit" + std::to_string(n);
    Unit unit;
    unit.self_norm = Norm::create(store, u + ".self_norm", E, s.ids);
    unit.self_attention = AttentionBlock::create(store, u + ".self", E, c.heads, rng, s.ids);
    unit.motion_norm = Norm::create(store, u + ".motion_norm", E, s.ids);
    unit.motion_cross = AttentionBlock::create(store, u + ".motion_cross", E, c.heads, rng, s.ids);
    if (c.use_drem) {
      unit.distance_in = Linear::create(store, u + ".drem.0", D * D, E, rng, s.ids);
      unit.distance_out = Linear::create(store, u + ".drem.1", E, E, rng, s.ids);
      unit.distance_norm = Norm::create(store, u + ".distance_norm", E, s.ids);
      unit.distance_cross =
          AttentionBlock::create(store, u + ".distance_cross", E, c.heads, rng, s.ids);
    }
    unit.ffn_norm = Norm::create(store, u + ".ffn_norm", E, s.ids);
    unit.ffn_in = Linear::create(store, u + ".ffn.0", E, 2 * E, rng, s.ids);
    unit.ffn_out = Linear::create(store, u + ".ffn.1", 2 * E, E, rng, s.ids);
    s.units.push_back(std::move(unit));
  }
  s.out_norm = Norm::create(store, prefix + ".out_norm", E, s.ids);
  s.out = Linear::create(store, prefix + ".out", E, E, rng, s.ids);
  return s;
}

}  // namespace

TasmEncoder::TasmEncoder(const TasmConfig& config, nn::ParamStore& store, Rng& rng)
    : config_(config) {
  config_.validate();
  const int T = config_.frames;
  const int E = config_.width;
  switch (config_.pe_mode) {
    case PeMode::kSynchronized:
      positional_.push_back(store.add("pe.shared", nn::normal_matrix(T, E, 0.02, rng)));
      break;
    case PeMode::kUnsynchronized:
      positional_.push_back(store.add("pe.x", nn::normal_matrix(T, E, 0.02, rng)));
      positional_.push_back(store.add("pe.y", nn::normal_matrix(T, E, 0.02, rng)));
      break;
    case PeMode::kSinusoidal:
      sinusoid_ = sinusoidal_embedding(T, E);
      break;
  }
  ids_ = positional_;
  if (config_.share_params) {
    streams_.push_back(make_stream(config_, store, "shared", rng));
  } else {
    streams_.push_back(make_stream(config_, store, "x", rng));
    streams_.push_back(make_stream(config_, store, "y", rng));
  }
  for (const auto& s : streams_) ids_.insert(ids_.end(), s.ids.begin(), s.ids.end());
}

Var TasmEncoder::embed_poses(tasm::Params p, nn::Tape& tape, const Matrix& poses,
                             int stream_index) const {
  if (poses.rows() != config_.frames || poses.cols() != 3 * config_.joints)
    throw ShapeError("embed_poses: expected " + std::to_string(config_.frames) + " x " +
                     std::to_string(3 * config_.joints) + " poses, got " +
                     std::to_string(poses.rows()) + " x " + std::to_string(poses.cols()));
  const auto& s = stream(stream_index);
  Var h = s.pose_out(p, nn::gelu(s.pose_in(p, tape.constant(poses))));
  switch (config_.pe_mode) {
    case PeMode::kSynchronized: return nn::add(h, p[positional_[0]]);
    case PeMode::kUnsynchronized:
      return nn::add(h, p[positional_[static_cast<std::size_t>(stream_index)]]);
    case PeMode::kSinusoidal: return nn::add(h, tape.constant(sinusoid_));
  }
  return h;
}

Var TasmEncoder::embed_distances(tasm::Params p, Var distance_maps, int unit,
                                 int stream_index) const {
  const auto& u = stream(stream_index).units[static_cast<std::size_t>(unit)];
  if (!u.distance_in) throw ConfigError("distance embedding requested with DREM disabled");
  return (*u.distance_out)(p, nn::gelu((*u.distance_in)(p, distance_maps)));
}

std::pair<Var, Var> TasmEncoder::unit_forward(tasm::Params p, int unit, Var fx, Var fy,
                                              Var distance_maps) const {
  const int T = config_.frames;
  const int E = config_.width;
  for (Var f : {fx, fy})
    if (f.rows() != T || f.cols() != E)
      throw ShapeError("unit_forward: stream features must be " + std::to_string(T) + " x " +
                       std::to_string(E));
  if (config_.use_drem &&
      (distance_maps.rows() != T || distance_maps.cols() != config_.joints * config_.joints))
    throw ShapeError("unit_forward: distance maps must be T x D^2");

  const auto idx = static_cast<std::size_t>(unit);
  const auto& ux = stream(0).units[idx];
  const auto& uy = stream(1).units[idx];

  // Self-attention.
  Var nx = ux.self_norm(p, fx);
  Var ny = uy.self_norm(p, fy);
  Var sx = nn::add(fx, ux.self_attention(p, nx, nx));
  Var sy = nn::add(fy, uy.self_attention(p, ny, ny));

  // Motion cross-attention: queries from one person, keys/values from the other.
  Var mx = nn::add(sx, ux.motion_cross(p, ux.motion_norm(p, sx), ux.motion_norm(p, sy)));
  Var my = nn::add(sy, uy.motion_cross(p, uy.motion_norm(p, sy), uy.motion_norm(p, sx)));

  // Distance cross-attention against the embedded maps.
  Var dx = mx;
  Var dy = my;
  if (config_.use_drem) {
    Var rx = embed_distances(p, distance_maps, unit, 0);
    Var ry = streams_share_storage() ? rx : embed_distances(p, distance_maps, unit, 1);
    dx = nn::add(mx, ux.distance_cross(p, ux.distance_norm(p, mx), rx));
    dy = nn::add(my, uy.distance_cross(p, uy.distance_norm(p, my), ry));
  }

  auto ffn = [&](const tasm::Unit& u, Var x) {
    return nn::add(x, u.ffn_out(p, nn::gelu(u.ffn_in(p, u.ffn_norm(p, x)))));
  };
  return {ffn(ux, dx), ffn(uy, dy)};
}

std::pair<Var, Var> TasmEncoder::stream_outputs(tasm::Params p, nn::Tape& tape,
                                                const Matrix& x_poses, const Matrix& y_poses,
                                                const Matrix& distance_maps) const {
  Var fx = embed_poses(p, tape, x_poses, 0);
  Var fy = embed_poses(p, tape, y_poses, 1);
  Var maps = tape.constant(distance_maps);
  for (int n = 0; n < config_.units; ++n) std::tie(fx, fy) = unit_forward(p, n, fx, fy, maps);
  auto finish = [&](int s, Var f) {
    const auto& st = stream(s);
    return nn::mean_rows(nn::gelu(st.out(p, st.out_norm(p, f))));
  };
  return {finish(0, fx), finish(1, fy)};
}

Var TasmEncoder::forward(tasm::Params p, nn::Tape& tape, const Matrix& x_poses,
                         const Matrix& y_poses, const Matrix& distance_maps) const {
  auto [px, py] = stream_outputs(p, tape, x_poses, y_poses, distance_maps);
  return nn::concat_cols(px, py);
}

Eigen::RowVectorXd TasmEncoder::encode(const nn::ParamStore& store,
                                       const InteractionPair& pair) const {
  pair.validate();
  if (pair.frames() != config_.frames || pair.joints() != config_.joints)
    throw ShapeError("encode: pair is " + std::to_string(pair.frames()) + " frames x " +
                     std::to_string(pair.joints()) + " joints; encoder expects " +
                     std::to_string(config_.frames) + " x " + std::to_string(config_.joints));
  nn::Tape tape;
  const auto p = store.bind(tape, false);
  Var f = forward(p, tape, to_matrix(pair.person_x.coords()), to_matrix(pair.person_y.coords()),
                  to_matrix(dynamic_distance_maps(pair).flattened()));
  return f.value().row(0);
}

std::size_t TasmEncoder::parameter_count(const nn::ParamStore& store) const {
  return store.scalar_count(ids_);
}

std::size_t TasmEncoder::stream_parameter_count(const nn::ParamStore& store, int s) const {
  return store.scalar_count(stream(s).ids);
}

std::size_t TasmEncoder::positional_parameter_count(const nn::ParamStore& store) const {
  return store.scalar_count(positional_);
}

}  // namespace h2iad
