#include "h2iad/data.hpp"

#include "h2iad/error.hpp"
#include "h2iad/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

namespace h2iad {

using json = nlohmann::json;

PoseSequence::PoseSequence(PoseMatrix coords, double fps) : coords_(std::move(coords)), fps_(fps) {
  if (!(fps_ > 0.0) || !std::isfinite(fps_)) throw DataError("fps must be a positive number");
  if (coords_.rows() < 2) throw DataError("a pose sequence needs at least 2 frames");
  if (coords_.cols() == 0 || coords_.cols() % 3 != 0)
    throw DataError("pose columns must be a positive multiple of 3");
  if (!coords_.allFinite()) throw DataError("non-finite joint coordinate");
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
    case Split::kUnspecified: break;
  }
  return "";
}

void InteractionPair::validate() const {
  if (person_x.frames() != person_y.frames())
    throw DataError("persons disagree on frame count (" + std::to_string(person_x.frames()) +
                    " vs " + std::to_string(person_y.frames()) + ")");
  if (person_x.joints() != person_y.joints())
    throw DataError("persons disagree on joint count (" + std::to_string(person_x.joints()) +
                    " vs " + std::to_string(person_y.joints()) + ")");
  if (person_x.frames() < 2) throw DataError("interaction has fewer than 2 frames");
}

std::vector<InteractionPair> InteractionDataset::of_category(std::string_view category) const {
  std::vector<InteractionPair> out;
  for (const auto& s : samples)
    if (s.category == category) out.push_back(s);
  return out;
}

void InteractionDataset::validate() const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].validate();
    if (samples[i].joints() != joint_count)
      throw DataError("sample " + std::to_string(i) + " has " +
                      std::to_string(samples[i].joints()) + " joints, dataset declares " +
                      std::to_string(joint_count));
    if (!categories.contains(samples[i].category))
      throw DataError("sample " + std::to_string(i) + " has undeclared category '" +
                      samples[i].category + "'");
  }
}

void InteractionDataset::add(InteractionPair pair) {
  pair.validate();
  if (samples.empty() && joint_count == 0) joint_count = pair.joints();
  if (pair.joints() != joint_count)
    throw DataError("joint count mismatch: expected " + std::to_string(joint_count) + ", got " +
                    std::to_string(pair.joints()));
  categories.insert(pair.category);
  samples.push_back(std::move(pair));
}

namespace {

PoseSequence parse_person(const json& arr, int joints, double fps, const char* who) {
  if (!arr.is_array()) throw DataError(std::string(who) + " must be an array");
  const auto frames = static_cast<Eigen::Index>(arr.size());
  if (frames < 2) throw DataError(std::string(who) + " has fewer than 2 frames");
  PoseMatrix coords(frames, 3 * joints);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const auto& frame = arr[static_cast<std::size_t>(t)];
    if (!frame.is_array() || static_cast<int>(frame.size()) != joints)
      throw DataError(std::string(who) + " frame " + std::to_string(t) + " does not have " +
                      std::to_string(joints) + " joints");
    for (int j = 0; j < joints; ++j) {
      const auto& p = frame[static_cast<std::size_t>(j)];
      if (!p.is_array() || p.size() != 3)
        throw DataError(std::string(who) + " frame " + std::to_string(t) + " joint " +
                        std::to_string(j) + " is not a 3-vector");
      for (int k = 0; k < 3; ++k) {
        const auto& v = p[static_cast<std::size_t>(k)];
        if (!v.is_number())
          throw DataError(std::string(who) + " coordinate is not a number");
        const double d = v.get<double>();
        const auto f = static_cast<float>(d);
        if (!std::isfinite(d) || !std::isfinite(f))
          throw DataError(std::string(who) + " has a non-finite coordinate");
        coords(t, 3 * j + k) = f;
      }
    }
  }
  return PoseSequence(std::move(coords), fps);
}

json person_to_json(const PoseSequence& seq) {
  json frames = json::array();
  for (int t = 0; t < seq.frames(); ++t) {
    json frame = json::array();
    for (int j = 0; j < seq.joints(); ++j) {
      const auto p = seq.joint(t, j);
      frame.push_back({static_cast<double>(p.x()), static_cast<double>(p.y()),
                       static_cast<double>(p.z())});
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

}  // namespace

InteractionPair parse_record(std::string_view text, std::size_t line) {
  const std::string where = "line " + std::to_string(line) + ": ";
  try {
    const json rec = json::parse(text);
    if (!rec.is_object()) throw DataError("record is not a JSON object");
    for (const char* key : {"category", "fps", "joints", "person_x", "person_y"})
      if (!rec.contains(key)) throw DataError(std::string("missing field '") + key + "'");
    if (!rec["category"].is_string()) throw DataError("category must be a string");
    if (!rec["fps"].is_number()) throw DataError("fps must be a number");
    if (!rec["joints"].is_number_integer() || rec["joints"].get<int>() < 1)
      throw DataError("joints must be a positive integer");
    const int joints = rec["joints"].get<int>();
    const double fps = rec["fps"].get<double>();
    InteractionPair pair{parse_person(rec["person_x"], joints, fps, "person_x"),
                         parse_person(rec["person_y"], joints, fps, "person_y"),
                         rec["category"].get<std::string>()};
    if (rec.contains("split")) {
      const auto tag = rec["split"].get<std::string>();
      if (tag == "train")
        pair.split = Split::kTrain;
      else if (tag == "test")
        pair.split = Split::kTest;
      else
        throw DataError("unknown split tag '" + tag + "'");
    }
    pair.validate();
    return pair;
  } catch (const json::exception& e) {
    throw DataError(where + "malformed record: " + e.what());
  } catch (const DataError& e) {
    throw DataError(where + e.what());
  }
}

std::string format_record(const InteractionPair& pair) {
  json rec;
  rec["category"] = pair.category;
  rec["fps"] = pair.person_x.fps();
  rec["joints"] = pair.joints();
  rec["person_x"] = person_to_json(pair.person_x);
  rec["person_y"] = person_to_json(pair.person_y);
  if (pair.split != Split::kUnspecified) rec["split"] = split_name(pair.split);
  return rec.dump();
}

InteractionDataset load_dataset(const std::filesystem::path& path,
                                std::optional<int> expected_joints) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  if (expected_joints && *expected_joints < 1) throw DataError("expected_joints must be positive");

  InteractionDataset dataset;
  if (expected_joints) dataset.joint_count = *expected_joints;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto pair = parse_record(text, line);
    if (dataset.joint_count != 0 && pair.joints() != dataset.joint_count)
      throw DataError("line " + std::to_string(line) + ": record has " +
                      std::to_string(pair.joints()) + " joints, expected " +
                      std::to_string(dataset.joint_count));
    dataset.add(std::move(pair));
  }
  return dataset;
}

void write_dataset(const InteractionDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset '" + path.string() + "'");
  for (const auto& s : dataset.samples) out << format_record(s) << '\n';
  if (!out) throw DataError("failed writing dataset '" + path.string() + "'");
}

InteractionPair normalize_pair(const InteractionPair& pair) {
  pair.validate();
  Eigen::Vector3d mid =
      0.5 * (pair.person_x.joint(0, 0).cast<double>() + pair.person_y.joint(0, 0).cast<double>());
  auto shift = [&](const PoseSequence& seq) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> c =
        seq.coords().cast<double>();
    for (int j = 0; j < seq.joints(); ++j)
      c.middleCols<3>(3 * j).rowwise() -= mid.transpose();
    return PoseSequence(c.cast<float>(), seq.fps());
  };
  InteractionPair out = pair;
  out.person_x = shift(pair.person_x);
  out.person_y = shift(pair.person_y);
  return out;
}

PoseSequence resample_to_length(const PoseSequence& seq, int target_frames) {
  if (seq.frames() < 2) throw DataError("resample needs at least 2 frames");
  if (target_frames < 2) throw DataError("resample target must be at least 2 frames");
  const int src = seq.frames();
  PoseMatrix out(target_frames, seq.coords().cols());
  for (int i = 0; i < target_frames; ++i) {
    const double u = static_cast<double>(i) * (src - 1) / (target_frames - 1);
    const int lo = std::min(static_cast<int>(std::floor(u)), src - 1);
    const double frac = u - lo;
    if (frac == 0.0 || lo == src - 1) {
      out.row(i) = seq.coords().row(lo);
    } else {
      out.row(i) = ((1.0 - frac) * seq.coords().row(lo).cast<double>() +
                    frac * seq.coords().row(lo + 1).cast<double>())
                       .cast<float>();
    }
  }
  return PoseSequence(std::move(out), seq.fps());
}

InteractionPair prepare_pair(const InteractionPair& pair, int frames) {
  InteractionPair out = normalize_pair(pair);
  if (out.frames() != frames) {
    out.person_x = resample_to_length(out.person_x, frames);
    out.person_y = resample_to_length(out.person_y, frames);
  }
  return out;
}

InteractionDataset merge_datasets(const std::vector<InteractionDataset>& parts) {
  InteractionDataset out;
  for (const auto& part : parts)
    for (const auto& s : part.samples) out.add(s);
  return out;
}

// --- synthetic interactions ---------------------------------------------

Scenario parse_scenario(std::string_view name) {
  if (name == "handshake") return Scenario::kHandshake;
  if (name == "strike") return Scenario::kStrike;
  if (name == "idle") return Scenario::kIdle;
  if (name == "approach") return Scenario::kApproach;
  throw DataError("unknown scenario '" + std::string(name) + "'");
}

std::string_view scenario_name(Scenario scenario) {
  switch (scenario) {
    case Scenario::kHandshake: return "handshake";
    case Scenario::kStrike: return "strike";
    case Scenario::kIdle: return "idle";
    case Scenario::kApproach: return "approach";
  }
  return "";
}

double idle_displacement_bound(const SynthOptions& options) {
  return 2.0 * options.idle_noise * std::sqrt(3.0);
}

namespace {

constexpr double kRootHeight = 0.95;
constexpr double kShoulderHeight = 0.4;
constexpr double kShoulderWidth = 0.18;
constexpr double kHandDrop = 0.45;
constexpr double kRestReach = 0.15;
constexpr double kJitter = 0.003;

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double lerp(double a, double b, double t) { return a + (b - a) * t; }

// Body points in the person's local frame (forward, left, up), relative to
// the root. Joint 1 (the hand) is placed by the scenario.
Eigen::Vector3d body_offset(int joint) {
  static const std::array<Eigen::Vector3d, 8> table = {
      Eigen::Vector3d(0.0, 0.0, 0.6),  Eigen::Vector3d(0.05, 0.0, 0.35),
      Eigen::Vector3d(0.0, 0.18, 0.4), Eigen::Vector3d(0.0, -0.18, 0.4),
      Eigen::Vector3d(0.0, 0.1, -0.5), Eigen::Vector3d(0.0, -0.1, -0.5),
      Eigen::Vector3d(0.0, 0.1, -0.9), Eigen::Vector3d(0.0, -0.1, -0.9)};
  const int k = joint - 2;
  if (k < static_cast<int>(table.size())) return table[static_cast<std::size_t>(k)];
  return {0.02 * (k % 3), 0.05 * (k % 5) - 0.1, 0.1 * (k % 7) - 0.3};
}

// Hand pose parameters in the local frame: forward reach, lateral offset,
// raise fraction (0 hangs, 1 at shoulder height).
struct Hand {
  double reach = kRestReach;
  double lateral = -kShoulderWidth;
  double raise = 0.0;
  double bob = 0.0;
};

struct PersonFrame {
  double root_forward = 0.0;  // position along the line joining the persons
  Hand hand;
};

class SceneBuilder {
 public:
  SceneBuilder(int frames, int joints, Rng& rng) : frames_(frames), joints_(joints) {
    yaw_ = rng.uniform(-0.3, 0.3);
    offset_ = Eigen::Vector3d(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0);
    scale_[0] = rng.uniform(0.9, 1.1);
    scale_[1] = rng.uniform(0.9, 1.1);
  }

  // Person x looks along +x, person y along -x.
  PoseMatrix render(const std::vector<PersonFrame>& track, int who) const {
    const double facing = who == 0 ? 1.0 : -1.0;
    const double body = scale_[who];
    const double c = std::cos(yaw_), s = std::sin(yaw_);
    PoseMatrix out(frames_, 3 * joints_);
    for (int t = 0; t < frames_; ++t) {
      const auto& pf = track[static_cast<std::size_t>(t)];
      const Eigen::Vector3d root(facing * pf.root_forward, 0.0, kRootHeight * body);
      auto local = [&](const Eigen::Vector3d& off) {
        // Local (forward, left, up) -> scene frame.
        return Eigen::Vector3d(root.x() + facing * off.x(), root.y() + facing * off.y(),
                               root.z() + off.z());
      };
      for (int j = 0; j < joints_; ++j) {
        Eigen::Vector3d p;
        if (j == 0) {
          p = root;
        } else if (j == 1) {
          const auto& h = pf.hand;
          p = local(Eigen::Vector3d(h.reach, h.lateral,
                                    body * kShoulderHeight - kHandDrop * (1.0 - h.raise) + h.bob));
        } else {
          p = local(body * body_offset(j));
        }
        const Eigen::Vector3d w(c * p.x() - s * p.y() + offset_.x(),
                                s * p.x() + c * p.y() + offset_.y(), p.z() + offset_.z());
        for (int k = 0; k < 3; ++k) out(t, 3 * j + k) = static_cast<float>(w[k]);
      }
    }
    return out;
  }

 private:
  int frames_;
  int joints_;
  double yaw_;
  Eigen::Vector3d offset_;
  std::array<double, 2> scale_{};
};

void jitter(PoseMatrix& m, Rng& rng, double amplitude, int first_joint) {
  for (Eigen::Index t = 0; t < m.rows(); ++t)
    for (Eigen::Index c = 3 * first_joint; c < m.cols(); ++c)
      m(t, c) = static_cast<float>(m(t, c) + rng.uniform(-amplitude, amplitude));
}

InteractionPair make_sample(Scenario scenario, Rng& rng, const SynthOptions& o) {
  const int T = o.frames;
  SceneBuilder scene(T, o.joints, rng);
  std::vector<PersonFrame> tx(static_cast<std::size_t>(T)), ty(static_cast<std::size_t>(T));
  auto u_at = [T](int t) { return static_cast<double>(t) / (T - 1); };

  switch (scenario) {
    case Scenario::kHandshake: {
      const double s0 = rng.uniform(2.2, 2.6);
      const double s1 = rng.uniform(0.85, 1.0);
      const double meet = rng.uniform(0.45, 0.55);
      const double pump = rng.uniform(2.0, 4.0);
      for (int t = 0; t < T; ++t) {
        const double u = u_at(t);
        const double sep = lerp(s0, s1, smoothstep(0.0, meet, u));
        const double raise = smoothstep(0.2, meet, u);
        Hand h;
        h.raise = raise;
        h.reach = lerp(kRestReach, sep / 2.0 - 0.02, raise);
        h.lateral = lerp(-kShoulderWidth, 0.0, raise);
        // Both hands pump together once joined.
        h.bob = u > meet ? 0.03 * std::sin(2.0 * std::numbers::pi * pump * (u - meet)) : 0.0;
        tx[static_cast<std::size_t>(t)] = {-sep / 2.0, h};
        ty[static_cast<std::size_t>(t)] = {-sep / 2.0, h};
      }
      break;
    }
    case Scenario::kStrike: {
      const double sep = rng.uniform(1.9, 2.3);
      const double onset = rng.uniform(0.3, 0.5);
      const double swing = rng.uniform(0.25, 0.35);
      for (int t = 0; t < T; ++t) {
        const double u = u_at(t);
        const double ramp = std::clamp((u - onset) / swing, 0.0, 1.0);
        const double p = ramp * ramp;  // accelerating
        Hand h;
        h.raise = p;
        h.reach = lerp(kRestReach, 0.75, p);
        h.lateral = lerp(-kShoulderWidth, 0.0, p);
        h.bob = -0.3 * p;  // aims at the other's root height
        tx[static_cast<std::size_t>(t)] = {-sep / 2.0, h};
        ty[static_cast<std::size_t>(t)] = {-sep / 2.0 - 0.1 * p, Hand{}};
      }
      break;
    }
    case Scenario::kIdle: {
      const double sep = rng.uniform(1.5, 2.5);
      for (int t = 0; t < T; ++t) {
        tx[static_cast<std::size_t>(t)] = {-sep / 2.0, Hand{}};
        ty[static_cast<std::size_t>(t)] = {-sep / 2.0, Hand{}};
      }
      break;
    }
    case Scenario::kApproach: {
      const double s0 = rng.uniform(3.0, 3.5);
      const double s1 = rng.uniform(1.3, 1.6);
      for (int t = 0; t < T; ++t) {
        const double sep = lerp(s0, s1, u_at(t));
        tx[static_cast<std::size_t>(t)] = {-sep / 2.0, Hand{}};
        ty[static_cast<std::size_t>(t)] = {-sep / 2.0, Hand{}};
      }
      break;
    }
  }

  PoseMatrix px = scene.render(tx, 0);
  PoseMatrix py = scene.render(ty, 1);
  if (scenario == Scenario::kIdle) {
    jitter(px, rng, o.idle_noise, 0);
    jitter(py, rng, o.idle_noise, 0);
  } else {
    jitter(px, rng, kJitter, 1);
    jitter(py, rng, kJitter, 1);
  }
  return InteractionPair{PoseSequence(std::move(px), o.fps), PoseSequence(std::move(py), o.fps),
                         std::string(scenario_name(scenario))};
}

}  // namespace

InteractionDataset synth_generate(Scenario scenario, int count, std::uint64_t seed,
                                  const SynthOptions& options) {
  if (count < 1) throw DataError("synth count must be positive");
  if (options.joints < 2) throw DataError("synthetic skeletons need at least 2 joints");
  if (options.frames < 2) throw DataError("synthetic sequences need at least 2 frames");
  Rng rng(stable_hash(scenario_name(scenario), seed));
  InteractionDataset out;
  out.joint_count = options.joints;
  for (int i = 0; i < count; ++i) out.add(make_sample(scenario, rng, options));
  return out;
}

InteractionDataset synth_generate(std::string_view scenario, int count, std::uint64_t seed,
                                  int frames, int joints) {
  SynthOptions options;
  options.frames = frames;
  options.joints = joints;
  return synth_generate(parse_scenario(scenario), count, seed, options);
}

}  // namespace h2iad
