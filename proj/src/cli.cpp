#include "h2iad/cli.hpp"

#include "h2iad/checkpoint.hpp"
#include "h2iad/config.hpp"
#include "h2iad/data.hpp"
#include "h2iad/ddm.hpp"
#include "h2iad/error.hpp"
#include "h2iad/eval.hpp"
#include "h2iad/train.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <ostream>
#include <thread>

namespace h2iad {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Flags shared by train and eval; unset flags leave the config untouched.
struct Overrides {
  std::string config_path;
  std::string data;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<double> final_lr;
  std::optional<int> batch_size;
  std::optional<int> frames;
  std::optional<int> width;
  std::optional<int> units;
  std::optional<int> heads;
  std::optional<double> slope_init;
  std::string pe_mode;
  bool no_drem = false;
  bool no_share = false;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--data", data, "dataset (.jsonl)");
    app.add_option("--seed", seed, "random seed");
    app.add_option("--epochs", epochs, "training epochs");
    app.add_option("--lr", lr, "initial learning rate");
    app.add_option("--final-lr", final_lr, "learning rate reached at the last epoch");
    app.add_option("--batch-size", batch_size, "mini-batch size");
    app.add_option("--frames", frames, "sequence length T after resampling");
    app.add_option("--width", width, "embedding width E");
    app.add_option("--units", units, "number of stacked attention units N");
    app.add_option("--heads", heads, "attention heads");
    app.add_option("--flow-slope-init", slope_init, "initial PReLU slope of the flow");
    app.add_option("--pe-mode", pe_mode, "positional embedding")
        ->check(CLI::IsMember({"sync", "unsync", "sinusoidal", "synchronized", "unsynchronized"}));
    app.add_flag("--no-drem", no_drem, "disable the distance branch");
    app.add_flag("--no-share", no_share, "separate parameters per stream");
  }

  RunConfig resolve() const {
    RunConfig rc = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (!data.empty()) rc.data = data;
    auto& t = rc.train;
    if (seed) t.seed = *seed;
    if (epochs) t.epochs = *epochs;
    if (lr) t.initial_lr = *lr;
    if (final_lr) t.final_lr = *final_lr;
    if (batch_size) t.batch_size = *batch_size;
    if (frames) t.tasm.frames = *frames;
    if (width) t.tasm.width = *width;
    if (units) t.tasm.units = *units;
    if (heads) t.tasm.heads = *heads;
    if (slope_init) t.flow_slope_init = *slope_init;
    if (!pe_mode.empty()) t.tasm.pe_mode = parse_pe_mode(pe_mode);
    if (no_drem) t.tasm.use_drem = false;
    if (no_share) t.tasm.share_params = false;
    if (rc.data.empty()) throw ConfigError("no dataset given (--data or \"data\" in the config)");
    return rc;
  }
};

int worker_threads() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("H2IAD_THREADS")) {
    const int bound = std::atoi(env);
    if (bound >= 1) n = std::min(n, bound);
  }
  return n;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

int cmd_synth(const std::vector<std::string>& scenarios, int count, std::uint64_t seed, int frames,
              int joints, const std::string& tag, const std::string& out_path, std::ostream& out) {
  std::vector<InteractionDataset> parts;
  SynthOptions options;
  options.frames = frames;
  options.joints = joints;
  for (const auto& name : scenarios) {
    auto part = synth_generate(parse_scenario(name), count, seed, options);
    if (!tag.empty())
      for (auto& s : part.samples) s.split = tag == "train" ? Split::kTrain : Split::kTest;
    parts.push_back(std::move(part));
  }
  const InteractionDataset merged = merge_datasets(parts);
  write_dataset(merged, out_path);
  out << "wrote " << merged.samples.size() << " samples to " << out_path << '\n';
  return kExitOk;
}

int cmd_train(const Overrides& o, const std::string& category, const std::string& out_path,
              const std::string& history_path, std::ostream& out, std::ostream& err) {
  RunConfig rc = o.resolve();
  if (!category.empty()) rc.train.normal_category = category;
  if (!out_path.empty()) rc.out = out_path;
  if (rc.train.normal_category.empty()) throw ConfigError("no normal category (--category)");
  if (rc.out.empty()) throw ConfigError("no checkpoint path (--out)");

  const InteractionDataset dataset = load_dataset(rc.data);
  if (rc.train.tasm.joints == 0) rc.train.tasm.joints = dataset.joint_count;
  rc.train.validate();
  out << to_json(rc).dump(2) << '\n';

  const TrainedModel model = train_one_class(dataset, rc.train, [&](const EpochReport& r) {
    err << "epoch " << r.epoch << " lr " << r.learning_rate << " nll " << r.mean_nll << '\n';
  });
  save_checkpoint(model, rc.out);

  const fs::path history = history_path.empty() ? fs::path(rc.out + ".history.csv") : fs::path(history_path);
  std::ofstream csv(history, std::ios::binary);
  if (!csv) throw DataError("cannot write '" + history.string() + "'");
  csv << "epoch,learning_rate,train_nll" << (model.holdout_history.empty() ? "" : ",holdout_nll")
      << '\n';
  char buf[128];
  for (std::size_t e = 0; e < model.loss_history.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g", e + 1,
                  learning_rate(model.config(), static_cast<int>(e + 1)), model.loss_history[e]);
    csv << buf;
    if (!model.holdout_history.empty()) {
      std::snprintf(buf, sizeof buf, ",%.17g", model.holdout_history[e]);
      csv << buf;
    }
    csv << '\n';
  }
  out << json{{"checkpoint", rc.out}, {"final_nll", model.final_nll}}.dump() << '\n';
  return kExitOk;
}

int cmd_score(const std::string& model_path, const std::string& data_path,
              const std::string& out_path, std::ostream& out) {
  const TrainedModel model = load_checkpoint(model_path);
  const InteractionDataset dataset = load_dataset(data_path);
  if (dataset.joint_count != model.config().tasm.joints)
    throw ShapeError("dataset has " + std::to_string(dataset.joint_count) +
                     " joints; checkpoint expects " + std::to_string(model.config().tasm.joints));
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::binary);
    if (!file) throw DataError("cannot write '" + out_path + "'");
  }
  std::ostream& sink = out_path.empty() ? out : file;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    sink << json{{"index", i}, {"category", s.category}, {"score", score(model, s)}}.dump() << '\n';
  }
  return kExitOk;
}

struct Ablation {
  std::string key;
  std::vector<std::string> values;
};

Ablation parse_ablation(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw ConfigError("--ablate expects key=v1,v2,...");
  Ablation a{spec.substr(0, eq), {}};
  std::stringstream ss(spec.substr(eq + 1));
  std::string v;
  while (std::getline(ss, v, ','))
    if (!v.empty()) a.values.push_back(v);
  if (a.values.empty()) throw ConfigError("--ablate lists no values");
  if (a.key != "pe_mode" && a.key != "use_drem" && a.key != "share_params")
    throw ConfigError("cannot ablate '" + a.key + "' (pe_mode, use_drem, share_params)");
  return a;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError("expected a boolean, got '" + v + "'");
}

int cmd_eval(const Overrides& o, std::vector<std::string> categories, const std::string& out_dir,
             const std::string& ablate, const std::vector<std::string>& stats, bool roc,
             int ddm_png, std::ostream& out) {
  RunConfig rc = o.resolve();
  if (!out_dir.empty()) rc.out = out_dir;
  if (rc.out.empty()) throw ConfigError("no output directory (--out)");
  bool with_dsp = false;
  for (const auto& s : stats) {
    if (s != "dsp") throw ConfigError("unknown statistic '" + s + "'");
    with_dsp = true;
  }

  const InteractionDataset dataset = load_dataset(rc.data);
  if (categories.empty()) categories.assign(dataset.categories.begin(), dataset.categories.end());
  if (categories.size() < 2 && dataset.categories.size() < 2)
    throw DataError("evaluation needs a dataset with at least two categories");
  if (rc.train.tasm.joints == 0) rc.train.tasm.joints = dataset.joint_count;
  rc.train.validate();

  std::vector<std::pair<std::string, TrainConfig>> settings;
  if (ablate.empty()) {
    settings.emplace_back("", rc.train);
  } else {
    const Ablation a = parse_ablation(ablate);
    for (const auto& v : a.values) {
      TrainConfig c = rc.train;
      if (a.key == "pe_mode")
        c.tasm.pe_mode = parse_pe_mode(v);
      else if (a.key == "use_drem")
        c.tasm.use_drem = parse_bool(v);
      else
        c.tasm.share_params = parse_bool(v);
      settings.emplace_back(a.key + "=" + v, c);
    }
  }

  BenchmarkOptions options;
  options.with_dsp = with_dsp;
  options.with_roc = roc;
  options.threads = worker_threads();

  std::vector<BenchmarkReport> reports;
  for (const auto& [label, config] : settings) {
    BenchmarkReport r = run_benchmark(dataset, categories, config, options);
    r.label = label;
    reports.push_back(std::move(r));
  }

  fs::create_directories(rc.out);
  const fs::path dir(rc.out);
  write_text(dir / "report.json", report_to_json(reports).dump(2) + "\n");
  const std::string table = report_to_text(reports);
  write_text(dir / "report.txt", table);
  if (roc)
    for (const auto& r : reports)
      for (const auto& row : r.rows) {
        const std::string stem = r.label.empty() ? row.category : r.label + "_" + row.category;
        write_roc_csv(row, dir / ("roc_" + stem + ".csv"));
      }
  if (ddm_png > 0)
    for (const auto& category : categories) {
      const auto members = dataset.of_category(category);
      for (std::size_t i = 0; i < members.size() && i < static_cast<std::size_t>(ddm_png); ++i) {
        const auto maps = dynamic_distance_maps(normalize_pair(members[i]));
        write_distance_map_pngs(maps, dir / "ddm" / category, "sample" + std::to_string(i));
      }
    }
  out << table;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-person interaction anomaly detection toolkit", "h2iad"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic interaction dataset");
  std::vector<std::string> scenarios;
  int synth_count = 10;
  std::uint64_t synth_seed = 0;
  int synth_frames = 32;
  int synth_joints = 6;
  std::string synth_tag, synth_out;
  synth->add_option("--scenario", scenarios, "handshake, strike, idle, approach")
      ->required()
      ->check(CLI::IsMember({"handshake", "strike", "idle", "approach"}));
  synth->add_option("--count", synth_count, "samples per scenario")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "random seed");
  synth->add_option("--frames", synth_frames, "frames per sample")->check(CLI::Range(2, 100000));
  synth->add_option("--joints", synth_joints, "joints per person")->check(CLI::Range(2, 1000));
  synth->add_option("--split", synth_tag, "tag every record")->check(CLI::IsMember({"train", "test"}));
  synth->add_option("--out", synth_out, "output .jsonl")->required();

  // train
  auto* train = app.add_subcommand("train", "train on one normal category");
  Overrides train_opts;
  train_opts.attach(*train);
  std::string train_category, train_out, train_history;
  train->add_option("--category", train_category, "normal category");
  train->add_option("--out", train_out, "checkpoint path");
  train->add_option("--history", train_history, "loss-history CSV (default <out>.history.csv)");

  // score
  auto* score_cmd = app.add_subcommand("score", "score samples with a checkpoint");
  std::string score_model, score_data, score_out;
  score_cmd->add_option("--model,--checkpoint", score_model, "checkpoint")->required();
  score_cmd->add_option("--data", score_data, "dataset (.jsonl)")->required();
  score_cmd->add_option("--out", score_out, "output .jsonl (default stdout)");

  // eval
  auto* eval = app.add_subcommand("eval", "one-class benchmark over categories");
  Overrides eval_opts;
  eval_opts.attach(*eval);
  std::vector<std::string> eval_categories, eval_stats;
  std::string eval_out, eval_ablate;
  bool eval_roc = false;
  int eval_ddm = 0;
  eval->add_option("--category", eval_categories, "normal categories (default: all)");
  eval->add_option("--out", eval_out, "report directory");
  eval->add_option("--ablate", eval_ablate, "key=v1,v2,... over pe_mode/use_drem/share_params");
  eval->add_option("--stat", eval_stats, "extra statistics (dsp)");
  eval->add_flag("--roc", eval_roc, "write ROC curve CSVs");
  eval->add_option("--ddm-png", eval_ddm, "distance-map PNG strips per category")
      ->check(CLI::NonNegativeNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*synth)
      return cmd_synth(scenarios, synth_count, synth_seed, synth_frames, synth_joints, synth_tag,
                       synth_out, out);
    if (*train) return cmd_train(train_opts, train_category, train_out, train_history, out, err);
    if (*score_cmd) return cmd_score(score_model, score_data, score_out, out);
    if (*eval)
      return cmd_eval(eval_opts, eval_categories, eval_out, eval_ablate, eval_stats, eval_roc,
                      eval_ddm, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kExitData;
  } catch (const ShapeError& e) {
    err << "shape mismatch: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "file error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace h2iad
