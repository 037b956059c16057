#pragma once

#include "h2iad/data.hpp"
#include "h2iad/train.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace h2iad {

struct ScoredSample {
  double score = 0.0;  // NLL; higher is more anomalous
  int label = 0;       // 1 = anomalous, 0 = normal
  std::string category;
};

// Probability that a random anomalous sample outscores a random normal one,
// ties counted one half (midrank statistic). Throws DataError unless both
// labels are present.
double auroc(std::span<const ScoredSample> samples);

struct RocPoint {
  double fpr;
  double tpr;
};

// Threshold sweep from +inf down through every distinct score; starts at
// (0, 0) and ends at (1, 1).
std::vector<RocPoint> roc_curve(std::span<const ScoredSample> samples);

struct SplitDataset {
  std::vector<InteractionPair> train;
  std::vector<InteractionPair> test;
};

// Honors explicit split tags; untagged records of each category are split
// 80/20 by a permutation seeded from (seed, category).
SplitDataset split_dataset(const InteractionDataset& dataset, std::uint64_t seed);

struct CategoryResult {
  std::string category;
  double auc = 0.0;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::optional<double> dsp;
  std::vector<RocPoint> roc;
};

struct BenchmarkReport {
  std::string label;  // ablation setting, empty for a plain run
  std::vector<CategoryResult> rows;  // sorted by category name
  double average = 0.0;
  std::string fingerprint;
  nlohmann::json config;
};

struct BenchmarkOptions {
  bool with_dsp = false;
  bool with_roc = false;
  // Per-category runs executed concurrently; results do not depend on it.
  int threads = 1;
};

BenchmarkReport run_benchmark(const InteractionDataset& dataset,
                              const std::vector<std::string>& categories,
                              const TrainConfig& base_config, const BenchmarkOptions& options = {});

nlohmann::json report_to_json(std::span<const BenchmarkReport> reports);
// One table per report: a header with the category names and "Avg.", one AUC
// row and, when computed, a dsp row.
std::string report_to_text(std::span<const BenchmarkReport> reports);
void write_roc_csv(const CategoryResult& row, const std::filesystem::path& path);

}  // namespace h2iad
