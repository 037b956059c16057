#pragma once

#include "h2iad/data.hpp"
#include "h2iad/flow.hpp"
#include "h2iad/params.hpp"
#include "h2iad/tasm.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace h2iad {

struct TrainConfig {
  int epochs = 50;
  double initial_lr = 1e-3;
  double final_lr = 1e-5;
  int batch_size = 32;
  std::uint64_t seed = 0;
  std::string normal_category;
  // Joint gradient-norm bound; 0 disables clipping.
  double grad_clip = 0.0;
  // Fraction of normal samples kept out of training for monitoring.
  double holdout_fraction = 0.0;
  int flow_layers = 10;
  double flow_slope_init = 0.25;
  TasmConfig tasm;

  // Throws ConfigError. tasm.joints may still be 0 here.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Geometric interpolation from initial_lr (epoch 1) to final_lr (last epoch).
double learning_rate(const TrainConfig& config, int epoch);

// Model inputs for one pair after normalization and resampling.
struct PreparedSample {
  nn::Matrix x_poses;        // T x 3D
  nn::Matrix y_poses;        // T x 3D
  nn::Matrix distance_maps;  // T x D^2
};

PreparedSample prepare_sample(const InteractionPair& pair, const TasmConfig& config);

// Encoder and flow over one parameter store. Construction order (encoder,
// then flow) fixes parameter ids and the initialization stream.
class Model {
 public:
  // config.tasm.joints must be set.
  explicit Model(const TrainConfig& config);

  const TrainConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const TasmEncoder& encoder() const { return encoder_; }
  const FlowModel& flow() const { return flow_; }

  // B x 1 per-sample NLL of the batch.
  nn::Var batch_nll(nn::Tape& tape, std::span<const nn::Var> p,
                    std::span<const PreparedSample> batch) const;

  // NLL of a raw pair (normalized and resampled internally).
  double score(const InteractionPair& pair) const;
  double score(const PreparedSample& sample) const;

 private:
  TrainConfig config_;
  nn::ParamStore params_;
  Rng init_rng_;
  TasmEncoder encoder_;
  FlowModel flow_;
};

struct TrainedModel {
  Model model;
  std::vector<double> loss_history;     // mean training NLL per epoch
  std::vector<double> holdout_history;  // mean holdout NLL per epoch, if any
  // Mean NLL over the training samples under the final parameters.
  double final_nll = 0.0;

  const TrainConfig& config() const { return model.config(); }
};

struct EpochReport {
  int epoch;
  double learning_rate;
  double mean_nll;
};
using TrainProgress = std::function<void(const EpochReport&)>;

// Trains encoder and flow jointly on samples of config.normal_category only.
// Throws DataError when no such sample exists and NumericError (naming the
// epoch and batch) when the loss becomes non-finite.
TrainedModel train_one_class(const InteractionDataset& dataset, const TrainConfig& config,
                             const TrainProgress& progress = {});

double score(const TrainedModel& model, const InteractionPair& pair);

}  // namespace h2iad
