#include "h2iad/eval.hpp"

#include "h2iad/config.hpp"
#include "h2iad/ddm.hpp"
#include "h2iad/error.hpp"
#include "h2iad/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <sstream>

namespace h2iad {

double auroc(std::span<const ScoredSample> samples) {
  std::size_t positives = 0;
  for (const auto& s : samples) {
    if (s.label != 0 && s.label != 1) throw DataError("labels must be 0 or 1");
    positives += static_cast<std::size_t>(s.label);
  }
  const std::size_t negatives = samples.size() - positives;
  if (positives == 0 || negatives == 0)
    throw DataError("auroc needs at least one anomalous and one normal sample");

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return samples[a].score < samples[b].score; });

  // Sum of midranks (1-based) of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && samples[order[j]].score == samples[order[i]].score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (samples[order[k]].label == 1) rank_sum += midrank;
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double n = static_cast<double>(negatives);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

std::vector<RocPoint> roc_curve(std::span<const ScoredSample> samples) {
  std::size_t positives = 0;
  for (const auto& s : samples) positives += static_cast<std::size_t>(s.label == 1);
  const std::size_t negatives = samples.size() - positives;
  if (positives == 0 || negatives == 0)
    throw DataError("roc curve needs at least one anomalous and one normal sample");

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return samples[a].score > samples[b].score; });
  std::vector<RocPoint> out{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && samples[order[j]].score == samples[order[i]].score) {
      (samples[order[j]].label == 1 ? tp : fp) += 1;
      ++j;
    }
    out.push_back({static_cast<double>(fp) / negatives, static_cast<double>(tp) / positives});
    i = j;
  }
  return out;
}

SplitDataset split_dataset(const InteractionDataset& dataset, std::uint64_t seed) {
  SplitDataset out;
  std::map<std::string, std::vector<std::size_t>> untagged;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    switch (s.split) {
      case Split::kTrain: out.train.push_back(s); break;
      case Split::kTest: out.test.push_back(s); break;
      case Split::kUnspecified: untagged[s.category].push_back(i); break;
    }
  }
  for (const auto& [category, indices] : untagged) {
    Rng rng(stable_hash(category, seed));
    const auto perm = rng.permutation(indices.size());
    const auto n_train = (indices.size() * 4 + 4) / 5;  // ceil(0.8 n)
    for (std::size_t k = 0; k < perm.size(); ++k) {
      auto pair = dataset.samples[indices[perm[k]]];
      (k < n_train ? out.train : out.test).push_back(std::move(pair));
    }
  }
  return out;
}

namespace {

CategoryResult run_category(const InteractionDataset& dataset, const SplitDataset& split,
                            const std::string& category, const TrainConfig& base,
                            const BenchmarkOptions& options) {
  InteractionDataset train_set;
  train_set.joint_count = dataset.joint_count;
  for (const auto& s : split.train)
    if (s.category == category) train_set.add(s);
  if (train_set.samples.empty())
    throw DataError("category '" + category + "' has no training samples");

  TrainConfig config = base;
  config.normal_category = category;
  const TrainedModel model = train_one_class(train_set, config);

  std::vector<ScoredSample> scored;
  scored.reserve(split.test.size());
  for (const auto& s : split.test)
    scored.push_back({score(model, s), s.category == category ? 0 : 1, s.category});

  CategoryResult row;
  row.category = category;
  row.auc = auroc(scored);
  row.train_count = train_set.samples.size();
  row.test_count = scored.size();
  if (options.with_roc) row.roc = roc_curve(scored);
  if (options.with_dsp) {
    const auto members = dataset.of_category(category);
    row.dsp = displacement_statistic(members);
  }
  return row;
}

}  // namespace

BenchmarkReport run_benchmark(const InteractionDataset& dataset,
                              const std::vector<std::string>& categories,
                              const TrainConfig& base_config, const BenchmarkOptions& options) {
  if (categories.empty()) throw DataError("benchmark needs at least one category");
  std::vector<std::string> sorted = categories;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (const auto& c : sorted)
    if (!dataset.categories.contains(c))
      throw DataError("category '" + c + "' is absent from the dataset");

  TrainConfig base = base_config;
  if (base.tasm.joints == 0) base.tasm.joints = dataset.joint_count;
  base.normal_category.clear();
  base.validate();

  const SplitDataset split = split_dataset(dataset, base.seed);
  std::vector<CategoryResult> rows(sorted.size());
  const auto workers = static_cast<std::size_t>(std::max(1, options.threads));
  for (std::size_t start = 0; start < sorted.size(); start += workers) {
    std::vector<std::future<CategoryResult>> pending;
    const std::size_t stop = std::min(sorted.size(), start + workers);
    for (std::size_t i = start; i < stop; ++i)
      pending.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                   run_category, std::cref(dataset), std::cref(split),
                                   std::cref(sorted[i]), std::cref(base), std::cref(options)));
    for (std::size_t i = start; i < stop; ++i) rows[i] = pending[i - start].get();
  }

  BenchmarkReport report;
  report.rows = std::move(rows);
  double total = 0.0;
  for (const auto& r : report.rows) total += r.auc;
  report.average = total / static_cast<double>(report.rows.size());
  report.config = to_json(base);
  report.fingerprint = config_fingerprint(report.config);
  return report;
}

nlohmann::json report_to_json(std::span<const BenchmarkReport> reports) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
      nlohmann::json j = {{"category", row.category},
                          {"auc", row.auc},
                          {"train_count", row.train_count},
                          {"test_count", row.test_count}};
      if (row.dsp) j["dsp"] = *row.dsp;
      rows.push_back(std::move(j));
    }
    out.push_back({{"label", r.label},
                   {"rows", std::move(rows)},
                   {"average_auc", r.average},
                   {"fingerprint", r.fingerprint},
                   {"config", r.config}});
  }
  return {{"reports", std::move(out)}};
}

namespace {

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

std::string report_to_text(std::span<const BenchmarkReport> reports) {
  std::ostringstream out;
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const auto& r = reports[k];
    if (k > 0) out << '\n';
    std::size_t label_width = 6;
    const std::string name = r.label.empty() ? "h2iad" : r.label;
    label_width = std::max(label_width, name.size());
    std::vector<std::size_t> widths;
    for (const auto& row : r.rows) widths.push_back(std::max<std::size_t>(5, row.category.size()));

    auto pad = [](const std::string& s, std::size_t w) {
      return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
    };
    out << pad("Method", label_width);
    for (std::size_t i = 0; i < r.rows.size(); ++i)
      out << " | " << pad(r.rows[i].category, widths[i]);
    out << " | Avg.\n";
    out << pad(name, label_width);
    for (std::size_t i = 0; i < r.rows.size(); ++i)
      out << " | " << pad(fixed3(r.rows[i].auc), widths[i]);
    out << " | " << fixed3(r.average) << '\n';
    const bool any_dsp =
        std::any_of(r.rows.begin(), r.rows.end(), [](const auto& row) { return row.dsp.has_value(); });
    if (any_dsp) {
      out << pad("dsp", label_width);
      for (std::size_t i = 0; i < r.rows.size(); ++i)
        out << " | " << pad(r.rows[i].dsp ? fixed3(*r.rows[i].dsp) : "-", widths[i]);
      out << " |\n";
    }
    out << "config " << r.fingerprint << '\n';
  }
  return out.str();
}

void write_roc_csv(const CategoryResult& row, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "fpr,tpr\n";
  char buf[64];
  for (const auto& p : row.roc) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g\n", p.fpr, p.tpr);
    out << buf;
  }
}

}  // namespace h2iad
