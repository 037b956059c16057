#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace h2iad {

// Frames x (joints * 3), row-major. Row t holds joint j at columns 3j..3j+2.
using PoseMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One person's 3D joint trajectory. Joint 0 is the root by convention.
class PoseSequence {
 public:
  PoseSequence() = default;
  // Throws DataError when the shape is invalid (T < 2, zero joints,
  // column count not divisible by 3, or non-finite coordinates).
  PoseSequence(PoseMatrix coords, double fps);

  int frames() const { return static_cast<int>(coords_.rows()); }
  int joints() const { return static_cast<int>(coords_.cols() / 3); }
  double fps() const { return fps_; }

  const PoseMatrix& coords() const { return coords_; }
  Eigen::Vector3f joint(int t, int j) const {
    return coords_.block<1, 3>(t, 3 * j).transpose();
  }

  bool operator==(const PoseSequence& other) const {
    return fps_ == other.fps_ && coords_.rows() == other.coords_.rows() &&
           coords_.cols() == other.coords_.cols() && coords_ == other.coords_;
  }

 private:
  PoseMatrix coords_;
  double fps_ = 30.0;
};

enum class Split { kUnspecified, kTrain, kTest };

std::string_view split_name(Split split);

struct InteractionPair {
  PoseSequence person_x;
  PoseSequence person_y;
  std::string category;
  Split split = Split::kUnspecified;

  int frames() const { return person_x.frames(); }
  int joints() const { return person_x.joints(); }

  // Throws DataError if the two persons disagree on T or D.
  void validate() const;

  bool operator==(const InteractionPair&) const = default;
};

struct InteractionDataset {
  std::vector<InteractionPair> samples;
  int joint_count = 0;
  std::set<std::string> categories;

  // Samples whose category equals `category`, in file order.
  std::vector<InteractionPair> of_category(std::string_view category) const;
  void validate() const;
  void add(InteractionPair pair);
};

// Reads the line-delimited JSON dataset format. Each line holds
// {category, fps, joints, person_x, person_y[, split]}; arrays are T x D x 3.
InteractionDataset load_dataset(const std::filesystem::path& path,
                                std::optional<int> expected_joints = std::nullopt);
void write_dataset(const InteractionDataset& dataset, const std::filesystem::path& path);

// Parses a single JSON record; `line` is only used in error messages.
InteractionPair parse_record(std::string_view text, std::size_t line);
std::string format_record(const InteractionPair& pair);

// Translates both persons by one shared vector so the midpoint of the two
// root joints at frame 0 sits at the origin.
InteractionPair normalize_pair(const InteractionPair& pair);

// Linear interpolation over uniformly spaced time parameters. Endpoints are
// copied exactly and target_frames == frames() is the identity.
PoseSequence resample_to_length(const PoseSequence& seq, int target_frames);

// normalize_pair followed by resampling both persons to `frames`.
InteractionPair prepare_pair(const InteractionPair& pair, int frames);

// --- synthetic interactions ---------------------------------------------

enum class Scenario { kHandshake, kStrike, kIdle, kApproach };

Scenario parse_scenario(std::string_view name);
std::string_view scenario_name(Scenario scenario);

struct SynthOptions {
  int frames = 32;
  int joints = 6;
  double fps = 30.0;
  // Per-coordinate half-width of the uniform jitter applied to idle poses.
  double idle_noise = 0.01;
};

// Upper bound on any joint's frame-to-frame displacement in the idle scenario.
double idle_displacement_bound(const SynthOptions& options);

// Joint 1 is the "hand"; joints >= 2 are rigid body points around the root.
InteractionDataset synth_generate(Scenario scenario, int count, std::uint64_t seed,
                                  const SynthOptions& options);
InteractionDataset synth_generate(std::string_view scenario, int count, std::uint64_t seed,
                                  int frames, int joints);

// Concatenates datasets; all must share the joint count.
InteractionDataset merge_datasets(const std::vector<InteractionDataset>& parts);

}  // namespace h2iad
