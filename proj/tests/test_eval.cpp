#include "h2iad/error.hpp"
#include "h2iad/eval.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "test_util.hpp"

namespace h2iad {
namespace {

std::vector<ScoredSample> make(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<ScoredSample> out;
  for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({scores[i], labels[i], ""});
  return out;
}

// Counts every (anomalous, normal) pair directly.
double pair_count_auc(const std::vector<ScoredSample>& s) {
  double wins = 0.0;
  long pairs = 0;
  for (const auto& a : s)
    for (const auto& b : s)
      if (a.label == 1 && b.label == 0) {
        ++pairs;
        wins += a.score > b.score ? 1.0 : (a.score == b.score ? 0.5 : 0.0);
      }
  return wins / static_cast<double>(pairs);
}

// Trapezoid area under a curve.
double area(const std::vector<RocPoint>& roc) {
  double a = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    a += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
  return a;
}

TEST(Auroc, Examples) {
  EXPECT_EQ(auroc(make({1, 2, 3, 4}, {0, 0, 1, 1})), 1.0);
  EXPECT_EQ(auroc(make({5, 5, 5, 5}, {0, 1, 0, 1})), 0.5);
  EXPECT_EQ(auroc(make({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0})), 0.75);
}

TEST(Auroc, ExhaustiveAgainstPairCounting) {
  // Every labeling of n <= 12 samples, on scores with and without ties.
  Rng rng(1);
  long checked = 0;
  for (int n = 2; n <= 12; ++n) {
    std::vector<std::vector<double>> score_sets;
    std::vector<double> distinct(n), tied(n), one_value(n, 1.0);
    for (int i = 0; i < n; ++i) {
      distinct[i] = rng.uniform(-1.0, 1.0);
      tied[i] = static_cast<double>(rng.index(3));
    }
    score_sets = {distinct, tied, one_value};
    for (const auto& scores : score_sets)
      for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
        std::vector<int> labels(n);
        for (int i = 0; i < n; ++i) labels[i] = (mask >> i) & 1u;
        const auto s = make(scores, labels);
        ASSERT_EQ(auroc(s), pair_count_auc(s)) << "n=" << n << " mask=" << mask;
        ++checked;
      }
  }
  EXPECT_GT(checked, 12000);
}

TEST(Auroc, MonotoneTransformAndLabelFlip) {
  Rng rng(2);
  std::vector<double> scores(40);
  std::vector<int> labels(40);
  for (int i = 0; i < 40; ++i) {
    scores[i] = rng.uniform(-3.0, 3.0);
    labels[i] = i % 3 == 0;
  }
  const double base = auroc(make(scores, labels));
  std::vector<double> warped;
  for (double s : scores) warped.push_back(std::exp(2.0 * s) + 7.0);
  EXPECT_EQ(auroc(make(warped, labels)), base);
  std::vector<int> flipped;
  for (int l : labels) flipped.push_back(1 - l);
  EXPECT_NEAR(auroc(make(scores, flipped)), 1.0 - base, 1e-15);
}

TEST(Auroc, SingleClassAndBadLabels) {
  EXPECT_THROW(auroc(make({1, 2}, {0, 0})), DataError);
  EXPECT_THROW(auroc(make({1, 2}, {1, 1})), DataError);
  EXPECT_THROW(auroc(make({}, {})), DataError);
  EXPECT_THROW(auroc(make({1, 2}, {0, 2})), DataError);
}

TEST(RocCurve, EndpointsAndAreaMatchAuroc) {
  Rng rng(3);
  std::vector<double> scores(30);
  std::vector<int> labels(30);
  for (int i = 0; i < 30; ++i) {
    scores[i] = static_cast<double>(rng.index(6));
    labels[i] = i % 2;
  }
  const auto s = make(scores, labels);
  const auto roc = roc_curve(s);
  EXPECT_EQ(roc.front().fpr, 0.0);
  EXPECT_EQ(roc.front().tpr, 0.0);
  EXPECT_EQ(roc.back().fpr, 1.0);
  EXPECT_EQ(roc.back().tpr, 1.0);
  for (std::size_t i = 1; i < roc.size(); ++i) {
    EXPECT_GE(roc[i].fpr, roc[i - 1].fpr);
    EXPECT_GE(roc[i].tpr, roc[i - 1].tpr);
  }
  EXPECT_NEAR(area(roc), auroc(s), 1e-12);
}

TEST(Split, TagsAreHonored) {
  auto ds = synth_generate("handshake", 4, 1, 8, 4);
  ds.samples[0].split = Split::kTest;
  for (std::size_t i = 1; i < 4; ++i) ds.samples[i].split = Split::kTrain;
  const auto split = split_dataset(ds, 9);
  EXPECT_EQ(split.train.size(), 3u);
  ASSERT_EQ(split.test.size(), 1u);
  EXPECT_EQ(split.test[0].person_x, ds.samples[0].person_x);
}

TEST(Split, UntaggedEightyTwentyPerCategory) {
  const auto ds = merge_datasets({synth_generate("handshake", 11, 1, 8, 4),
                                  synth_generate("idle", 5, 1, 8, 4)});
  const auto a = split_dataset(ds, 4);
  auto count = [](const std::vector<InteractionPair>& v, const std::string& c) {
    return std::count_if(v.begin(), v.end(), [&](const auto& p) { return p.category == c; });
  };
  EXPECT_EQ(count(a.train, "handshake"), 9);
  EXPECT_EQ(count(a.test, "handshake"), 2);
  EXPECT_EQ(count(a.train, "idle"), 4);
  EXPECT_EQ(count(a.test, "idle"), 1);
  const auto b = split_dataset(ds, 4);
  ASSERT_EQ(a.test.size(), b.test.size());
  for (std::size_t i = 0; i < a.test.size(); ++i)
    EXPECT_EQ(a.test[i].person_x, b.test[i].person_x);
}

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 8;
  c.batch_size = 1;
  c.seed = 2;
  c.flow_layers = 4;
  // Tiny budgets stay in the regime where 0.25 slopes invert the ranking.
  c.flow_slope_init = 1.0;
  c.tasm.frames = 8;
  c.tasm.width = 16;
  c.tasm.units = 1;
  return c;
}

TEST(Benchmark, SingletonCategory) {
  const auto ds = merge_datasets({synth_generate("handshake", 10, 1, 8, 4),
                                  synth_generate("idle", 10, 1, 8, 4)});
  auto c = small_config();
  c.epochs = 1;
  const auto report = run_benchmark(ds, {"idle"}, c);
  ASSERT_EQ(report.rows.size(), 1u);
  EXPECT_EQ(report.average, report.rows[0].auc);
  EXPECT_EQ(report.rows[0].train_count, 8u);
  EXPECT_EQ(report.rows[0].test_count, 4u);
  EXPECT_THROW(run_benchmark(ds, {"wave"}, c), DataError);
  EXPECT_THROW(run_benchmark(ds, {}, c), DataError);
}

TEST(Benchmark, SeparableCategoriesAndMean) {
  const auto ds = merge_datasets({synth_generate("handshake", 50, 3, 16, 4),
                                  synth_generate("strike", 50, 3, 16, 4)});
  BenchmarkOptions opts;
  opts.with_roc = true;
  opts.with_dsp = true;
  auto c = small_config();
  c.epochs = 30;
  c.flow_layers = 10;
  const auto report = run_benchmark(ds, {"strike", "handshake"}, c, opts);
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_EQ(report.rows[0].category, "handshake");
  double total = 0.0;
  for (const auto& row : report.rows) {
    EXPECT_GE(row.auc, 0.9) << row.category;
    EXPECT_TRUE(row.dsp.has_value());
    EXPECT_NEAR(area(row.roc), row.auc, 1e-12);
    total += row.auc;
  }
  EXPECT_NEAR(report.average, total / 2.0, 1e-12);
}

TEST(Benchmark, TestOrderDoesNotChangeAucs) {
  auto ds = merge_datasets({synth_generate("handshake", 10, 5, 8, 4),
                            synth_generate("strike", 10, 5, 8, 4)});
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    ds.samples[i].split = i % 10 < 7 ? Split::kTrain : Split::kTest;
  auto c = small_config();
  c.epochs = 2;
  const auto a = run_benchmark(ds, {"handshake", "strike"}, c);
  auto reversed = ds;
  std::reverse(reversed.samples.begin(), reversed.samples.end());
  // Training order is kept; only the test records are reshuffled.
  InteractionDataset mixed;
  for (const auto& s : ds.samples)
    if (s.split == Split::kTrain) mixed.add(s);
  for (const auto& s : reversed.samples)
    if (s.split == Split::kTest) mixed.add(s);
  const auto b = run_benchmark(mixed, {"handshake", "strike"}, c);
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].auc, b.rows[i].auc);
}

TEST(Report, JsonTextAndRocCsv) {
  BenchmarkReport r;
  r.rows = {{"handshake", 0.75, 8, 6, 0.5, {{0, 0}, {0.5, 1}, {1, 1}}}, {"strike", 1.0, 8, 6, {}, {}}};
  r.average = 0.875;
  r.fingerprint = "deadbeef";
  const std::vector<BenchmarkReport> reports{r};
  const auto j = report_to_json(reports);
  EXPECT_EQ(j["reports"][0]["average_auc"], 0.875);
  EXPECT_EQ(j["reports"][0]["rows"][0]["dsp"], 0.5);
  EXPECT_FALSE(j["reports"][0]["rows"][1].contains("dsp"));
  const auto text = report_to_text(reports);
  EXPECT_NE(text.find("Avg."), std::string::npos);
  EXPECT_NE(text.find("0.875"), std::string::npos);
  EXPECT_NE(text.find("handshake"), std::string::npos);

  testing::TempDir dir("roc");
  write_roc_csv(r.rows[0], dir / "roc.csv");
  std::ifstream in(dir / "roc.csv");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 4);
}

}  // namespace
}  // namespace h2iad
