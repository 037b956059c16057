#pragma once

#include "h2iad/data.hpp"

#include <filesystem>
#include <span>

namespace h2iad {

// Per-frame D x D maps of negated inter-person joint distances. Row t of
// `values` is map t flattened row-major: entry (i, j) is -|x_t^i - y_t^j|.
class DistanceMapSequence {
 public:
  DistanceMapSequence(PoseMatrix values, int joints) : values_(std::move(values)), joints_(joints) {}

  int frames() const { return static_cast<int>(values_.rows()); }
  int joints() const { return joints_; }
  float at(int t, int i, int j) const { return values_(t, i * joints_ + j); }
  Eigen::MatrixXf frame(int t) const;
  const PoseMatrix& flattened() const { return values_; }

 private:
  PoseMatrix values_;
  int joints_;
};

DistanceMapSequence dynamic_distance_maps(const InteractionPair& pair);

// Mean over samples of max_{i,j} (max_t d_ij(t) - min_t d_ij(t)).
// Throws DataError on an empty list.
double displacement_statistic(std::span<const InteractionPair> samples);

// Writes one 8-bit grayscale PNG per frame, `<prefix>_<t>.png`. Pixel values
// map 0 to black and the sequence's most negative entry to white; each map
// entry becomes a `cell` x `cell` block.
void write_distance_map_pngs(const DistanceMapSequence& maps, const std::filesystem::path& dir,
                             const std::string& prefix, int cell = 8);

}  // namespace h2iad
