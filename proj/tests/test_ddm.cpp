#include "h2iad/ddm.hpp"
#include "h2iad/error.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>

namespace h2iad {
namespace {

using testing::pair_from;
using testing::random_pair;

InteractionPair swapped(const InteractionPair& p) {
  return {p.person_y, p.person_x, p.category};
}

InteractionPair transformed(const InteractionPair& p, float scale, const Eigen::Vector3f& shift) {
  auto apply = [&](const PoseSequence& s) {
    PoseMatrix m = s.coords() * scale;
    for (int t = 0; t < m.rows(); ++t)
      for (int j = 0; j < s.joints(); ++j) m.block<1, 3>(t, 3 * j) += shift.transpose();
    return PoseSequence(m, s.fps());
  };
  return {apply(p.person_x), apply(p.person_y), p.category};
}

TEST(DistanceMaps, ThreeFourFive) {
  PoseMatrix x = PoseMatrix::Zero(2, 3), y(2, 3);
  y << 3, 4, 0,  //
      0, 0, 0;
  const auto maps = dynamic_distance_maps(pair_from(x, y));
  EXPECT_FLOAT_EQ(maps.at(0, 0, 0), -5.0f);
  EXPECT_EQ(maps.at(1, 0, 0), 0.0f);
}

TEST(DistanceMaps, EntriesMatchDirectDistances) {
  Rng rng(1);
  const auto pair = random_pair(rng, 5, 4);
  const auto maps = dynamic_distance_maps(pair);
  ASSERT_EQ(maps.frames(), 5);
  for (int t = 0; t < 5; ++t)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        const double d = (pair.person_x.joint(t, i).cast<double>() -
                          pair.person_y.joint(t, j).cast<double>()).norm();
        EXPECT_NEAR(maps.at(t, i, j), -d, 1e-6);
        EXPECT_EQ(maps.frame(t)(i, j), maps.at(t, i, j));
      }
}

TEST(DistanceMaps, PropertiesOnRandomPairs) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pair = random_pair(rng, 4, 5);
    const auto maps = dynamic_distance_maps(pair);
    EXPECT_LE(maps.flattened().maxCoeff(), 0.0f);

    const auto swap = dynamic_distance_maps(swapped(pair));
    for (int t = 0; t < maps.frames(); ++t)
      EXPECT_EQ(swap.frame(t), maps.frame(t).transpose());

    const Eigen::Vector3f shift(static_cast<float>(rng.uniform(-3, 3)),
                                static_cast<float>(rng.uniform(-3, 3)),
                                static_cast<float>(rng.uniform(-3, 3)));
    const auto moved = dynamic_distance_maps(transformed(pair, 1.0f, shift));
    EXPECT_LT((moved.flattened() - maps.flattened()).cwiseAbs().maxCoeff(), 1e-6);

    const float s = static_cast<float>(rng.uniform(0.5, 2.0));
    const auto scaled = dynamic_distance_maps(transformed(pair, s, Eigen::Vector3f::Zero()));
    const auto& a = scaled.flattened();
    const auto& b = maps.flattened();
    for (Eigen::Index k = 0; k < a.size(); ++k)
      EXPECT_NEAR(a.data()[k], s * b.data()[k], 1e-6 * std::abs(s * b.data()[k]));
  }
}

TEST(DistanceMaps, CloserJointsGiveLargerEntries) {
  PoseMatrix x = PoseMatrix::Zero(3, 3), y(3, 3);
  y << 3, 0, 0,  //
      2, 0, 0,   //
      1, 0, 0;
  const auto maps = dynamic_distance_maps(pair_from(x, y));
  EXPECT_LT(maps.at(0, 0, 0), maps.at(1, 0, 0));
  EXPECT_LT(maps.at(1, 0, 0), maps.at(2, 0, 0));
}

TEST(Displacement, StaticPairIsZero) {
  Rng rng(3);
  auto pair = random_pair(rng, 2, 3);
  PoseMatrix x(4, 9), y(4, 9);
  for (int t = 0; t < 4; ++t) {
    x.row(t) = pair.person_x.coords().row(0);
    y.row(t) = pair.person_y.coords().row(0);
  }
  const std::vector<InteractionPair> samples{pair_from(x, y)};
  EXPECT_EQ(displacement_statistic(samples), 0.0);
}

TEST(Displacement, SingleMovingPairGivesItsRange) {
  // y's joint 0 slides from 1 m to 4 m away from x's joint 0. The far joints
  // see that slide only as a tiny change in a 100 m distance.
  PoseMatrix x(4, 6), y(4, 6);
  for (int t = 0; t < 4; ++t) {
    x.row(t) << 0, 0, 0, 0, 100, 0;
    y.row(t) << 1.0f + t, 0, 0, 0, -100, 0;
  }
  const std::vector<InteractionPair> samples{pair_from(x, y)};
  EXPECT_NEAR(displacement_statistic(samples), 3.0, 1e-6);
}

TEST(Displacement, MeanOverSamples) {
  PoseMatrix x = PoseMatrix::Zero(2, 3), y1(2, 3), y2(2, 3);
  y1 << 1, 0, 0, 2, 0, 0;
  y2 << 1, 0, 0, 4, 0, 0;
  const std::vector<InteractionPair> samples{pair_from(x, y1), pair_from(x, y2)};
  EXPECT_NEAR(displacement_statistic(samples), 2.0, 1e-6);
  EXPECT_THROW(displacement_statistic(std::span<const InteractionPair>{}), DataError);
}

TEST(Displacement, StrikeExceedsIdle) {
  const auto strike = synth_generate("strike", 50, 5, 16, 6);
  const auto idle = synth_generate("idle", 50, 5, 16, 6);
  EXPECT_GT(displacement_statistic(strike.samples), displacement_statistic(idle.samples));
}

TEST(DistanceMapPng, WritesOneFilePerFrame) {
  testing::TempDir dir("png");
  Rng rng(4);
  const auto maps = dynamic_distance_maps(random_pair(rng, 3, 4));
  write_distance_map_pngs(maps, dir.path() / "maps", "s", 4);
  for (int t = 0; t < 3; ++t) {
    const auto file = dir.path() / "maps" / ("s_" + std::to_string(t) + ".png");
    ASSERT_TRUE(std::filesystem::exists(file)) << file;
    std::ifstream in(file, std::ios::binary);
    char magic[8];
    in.read(magic, 8);
    EXPECT_EQ(std::string(magic + 1, 3), "PNG");
  }
}

}  // namespace
}  // namespace h2iad
