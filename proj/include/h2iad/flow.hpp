#pragma once

// Invertible MLP density model. Each layer computes
//   pre = (f Q^T) * exp(log_scale) + bias,   out = PReLU(pre)
// where Q is the orthogonal factor of an unconstrained square matrix. The
// final layer omits the PReLU. log|det J| is analytic: the orthogonal factor
// contributes nothing, the scale contributes sum(log_scale), and the PReLU
// contributes log(slope) for every negative pre-activation.

#include "h2iad/autodiff.hpp"
#include "h2iad/params.hpp"
#include "h2iad/rng.hpp"

#include <optional>
#include <span>
#include <vector>

namespace h2iad {

inline constexpr double kMinPreluSlope = 1e-3;

struct FlowLayer {
  nn::ParamId basis{};      // unconstrained d x d; Q comes from its QR factorization
  nn::ParamId log_scale{};  // 1 x d
  nn::ParamId bias{};       // 1 x d
  std::optional<nn::ParamId> slope;  // 1 x d, absent on the last layer
};

class FlowModel {
 public:
  // Random orthogonal bases, unit scales, zero bias and PReLU slopes of
  // `slope_init`.
  FlowModel(int dim, int layers, nn::ParamStore& store, Rng& rng, double slope_init = 0.25);

  // Q = I, scale = 1, bias = 0, slope = 1: the identity map.
  static FlowModel identity(int dim, int layers, nn::ParamStore& store);

  int dim() const { return dim_; }
  int layer_count() const { return static_cast<int>(layers_.size()); }
  const std::vector<FlowLayer>& layers() const { return layers_; }
  const std::vector<nn::ParamId>& parameter_ids() const { return ids_; }

  struct Output {
    nn::Var latent;  // B x d
    nn::Var logdet;  // B x 1
  };

  // Rows of `f` are independent samples.
  Output forward(std::span<const nn::Var> p, nn::Var f) const;
  // B x 1 per-row negative log-likelihood under a standard normal latent.
  nn::Var nll(std::span<const nn::Var> p, nn::Var f) const;

  // Value-level helpers over a single sample. Throw ShapeError on dimension
  // mismatch and NumericError on non-finite intermediates.
  std::pair<Eigen::RowVectorXd, double> forward(const nn::ParamStore& store,
                                                const Eigen::RowVectorXd& f) const;
  Eigen::RowVectorXd inverse(const nn::ParamStore& store, const Eigen::RowVectorXd& s) const;
  double nll(const nn::ParamStore& store, const Eigen::RowVectorXd& f) const;

 private:
  FlowModel() = default;

  int dim_ = 0;
  std::vector<FlowLayer> layers_;
  std::vector<nn::ParamId> ids_;
};

// d/2 ln(2 pi) + |s|^2 / 2 - logdet.
double gaussian_nll(const Eigen::RowVectorXd& latent, double logdet);

}  // namespace h2iad
