#include "h2iad/train.hpp"

#include "h2iad/ddm.hpp"
#include "h2iad/error.hpp"

#include <algorithm>
#include <cmath>

namespace h2iad {

using nn::Matrix;
using nn::Var;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(initial_lr >= 0.0) || !(final_lr >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (final_lr > initial_lr) throw ConfigError("final_lr must not exceed initial_lr");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
    throw ConfigError("holdout_fraction must lie in [0, 1)");
  if (flow_layers < 1) throw ConfigError("flow_layers must be >= 1");
  if (!(flow_slope_init >= kMinPreluSlope) || !std::isfinite(flow_slope_init))
    throw ConfigError("flow_slope_init must be a finite value >= 1e-3");
  TasmConfig probe = tasm;
  if (probe.joints == 0) probe.joints = 1;
  probe.validate();
}

double learning_rate(const TrainConfig& config, int epoch) {
  if (epoch < 1 || epoch > config.epochs) throw ConfigError("epoch out of range");
  if (config.epochs == 1 || config.initial_lr == config.final_lr) return config.initial_lr;
  if (epoch == config.epochs) return config.final_lr;
  const double progress = static_cast<double>(epoch - 1) / (config.epochs - 1);
  // A zero endpoint has no geometric path; fall back to linear decay.
  if (config.final_lr == 0.0) return config.initial_lr * (1.0 - progress);
  return config.initial_lr * std::pow(config.final_lr / config.initial_lr, progress);
}

PreparedSample prepare_sample(const InteractionPair& pair, const TasmConfig& config) {
  if (pair.joints() != config.joints)
    throw ShapeError("pair has " + std::to_string(pair.joints()) + " joints, model expects " +
                     std::to_string(config.joints));
  const InteractionPair ready = prepare_pair(pair, config.frames);
  return {to_matrix(ready.person_x.coords()), to_matrix(ready.person_y.coords()),
          to_matrix(dynamic_distance_maps(ready).flattened())};
}

Model::Model(const TrainConfig& config)
    : config_(config),
      init_rng_(config.seed),
      encoder_(config.tasm, params_, init_rng_),
      flow_(2 * config.tasm.width, config.flow_layers, params_, init_rng_, config.flow_slope_init) {
  config_.validate();
}

Var Model::batch_nll(nn::Tape& tape, std::span<const Var> p,
                     std::span<const PreparedSample> batch) const {
  std::vector<Var> features;
  features.reserve(batch.size());
  for (const auto& s : batch)
    features.push_back(encoder_.forward(p, tape, s.x_poses, s.y_poses, s.distance_maps));
  return flow_.nll(p, nn::concat_rows(features));
}

double Model::score(const PreparedSample& sample) const {
  nn::Tape tape;
  const auto p = params_.bind(tape, false);
  const double v = batch_nll(tape, p, std::span(&sample, 1)).scalar();
  if (!std::isfinite(v)) throw NumericError("score: non-finite NLL");
  return v;
}

double Model::score(const InteractionPair& pair) const {
  return score(prepare_sample(pair, config_.tasm));
}

namespace {

double mean_score(const Model& model, const std::vector<PreparedSample>& samples) {
  double total = 0.0;
  for (const auto& s : samples) total += model.score(s);
  return total / static_cast<double>(samples.size());
}

}  // namespace

TrainedModel train_one_class(const InteractionDataset& dataset, const TrainConfig& base,
                             const TrainProgress& progress) {
  TrainConfig config = base;
  if (config.tasm.joints == 0) config.tasm.joints = dataset.joint_count;
  config.validate();
  config.tasm.validate();

  std::vector<PreparedSample> normal;
  for (const auto& pair : dataset.samples)
    if (pair.category == config.normal_category)
      normal.push_back(prepare_sample(pair, config.tasm));
  if (normal.empty())
    throw DataError("no samples of normal category '" + config.normal_category + "'");

  std::vector<PreparedSample> holdout;
  if (config.holdout_fraction > 0.0 && normal.size() > 1) {
    Rng split_rng(stable_hash("holdout", config.seed));
    const auto order = split_rng.permutation(normal.size());
    const auto n_hold = std::min(normal.size() - 1,
                                 static_cast<std::size_t>(config.holdout_fraction * normal.size()));
    std::vector<PreparedSample> train;
    for (std::size_t i = 0; i < order.size(); ++i)
      (i < n_hold ? holdout : train).push_back(normal[order[i]]);
    normal = std::move(train);
  }

  TrainedModel out{Model(config), {}, {}, 0.0};
  Model& model = out.model;
  nn::Adam adam(model.params());
  Rng shuffle_rng(stable_hash("shuffle", config.seed));
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = learning_rate(config, epoch);
    const auto order = shuffle_rng.permutation(normal.size());
    double epoch_total = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + batch);
      std::vector<PreparedSample> items;
      for (std::size_t i = start; i < stop; ++i) items.push_back(normal[order[i]]);

      nn::Tape tape;
      const auto p = model.params().bind(tape);
      Var per_sample = model.batch_nll(tape, p, items);
      Var loss = nn::mean(per_sample);
      if (!std::isfinite(loss.scalar()))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      tape.backward(loss);
      std::vector<Matrix> grads;
      grads.reserve(p.size());
      for (const Var& v : p) grads.push_back(v.grad());
      for (const auto& g : grads)
        if (!g.allFinite())
          throw NumericError("non-finite gradient at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_index));
      if (config.grad_clip > 0.0) nn::clip_grad_norm(grads, config.grad_clip);
      adam.step(model.params(), grads, lr);
      epoch_total += per_sample.value().sum();
    }
    const double epoch_mean = epoch_total / static_cast<double>(normal.size());
    out.loss_history.push_back(epoch_mean);
    if (!holdout.empty()) out.holdout_history.push_back(mean_score(model, holdout));
    if (progress) progress({epoch, lr, epoch_mean});
  }
  out.final_nll = mean_score(model, normal);
  return out;
}

double score(const TrainedModel& model, const InteractionPair& pair) {
  return model.model.score(pair);
}

}  // namespace h2iad
