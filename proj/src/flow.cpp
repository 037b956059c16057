#include "h2iad/flow.hpp"

#include "h2iad/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace h2iad {

using nn::Matrix;
using nn::Var;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

FlowModel::FlowModel(int dim, int layers, nn::ParamStore& store, Rng& rng, double slope_init)
    : dim_(dim) {
  if (dim < 1) throw ConfigError("flow dimension must be positive");
  if (layers < 1) throw ConfigError("flow needs at least one layer");
  for (int l = 0; l < layers; ++l) {
    const std::string name = "flow.layer" + std::to_string(l);
    FlowLayer layer;
    layer.basis = store.add(name + ".basis", nn::normal_matrix(dim, dim, 1.0, rng));
    layer.log_scale = store.add(name + ".log_scale", Matrix::Zero(1, dim));
    layer.bias = store.add(name + ".bias", Matrix::Zero(1, dim));
    ids_.insert(ids_.end(), {layer.basis, layer.log_scale, layer.bias});
    if (l + 1 < layers) {
      layer.slope = store.add(name + ".slope", Matrix::Constant(1, dim, slope_init), kMinPreluSlope);
      ids_.push_back(*layer.slope);
    }
    layers_.push_back(layer);
  }
}

FlowModel FlowModel::identity(int dim, int layers, nn::ParamStore& store) {
  if (dim < 1) throw ConfigError("flow dimension must be positive");
  if (layers < 1) throw ConfigError("flow needs at least one layer");
  FlowModel m;
  m.dim_ = dim;
  for (int l = 0; l < layers; ++l) {
    const std::string name = "flow.layer" + std::to_string(l);
    FlowLayer layer;
    layer.basis = store.add(name + ".basis", Matrix::Identity(dim, dim));
    layer.log_scale = store.add(name + ".log_scale", Matrix::Zero(1, dim));
    layer.bias = store.add(name + ".bias", Matrix::Zero(1, dim));
    m.ids_.insert(m.ids_.end(), {layer.basis, layer.log_scale, layer.bias});
    if (l + 1 < layers) {
      layer.slope = store.add(name + ".slope", Matrix::Ones(1, dim), kMinPreluSlope);
      m.ids_.push_back(*layer.slope);
    }
    m.layers_.push_back(layer);
  }
  return m;
}

FlowModel::Output FlowModel::forward(std::span<const Var> p, Var f) const {
  if (f.cols() != dim_)
    throw ShapeError("flow: expected " + std::to_string(dim_) + " features, got " +
                     std::to_string(f.cols()));
  nn::Tape& tape = *f.tape();
  Var x = f;
  Var logdet = tape.constant(Matrix::Zero(f.rows(), 1));
  for (const auto& layer : layers_) {
    Var q = nn::qr_orthogonal(p[layer.basis]);
    Var pre = nn::add(nn::mul(nn::matmul(x, nn::transpose(q)), nn::exp(p[layer.log_scale])),
                      p[layer.bias]);
    logdet = nn::add(logdet, nn::sum(p[layer.log_scale]));
    if (layer.slope) {
      logdet = nn::add(logdet, nn::prelu_log_slope(pre, p[*layer.slope]));
      x = nn::prelu(pre, p[*layer.slope]);
    } else {
      x = pre;
    }
  }
  return {x, logdet};
}

Var FlowModel::nll(std::span<const Var> p, Var f) const {
  auto [s, logdet] = forward(p, f);
  Var quad = nn::scale(nn::row_sum_squares(s), 0.5);
  return nn::add_scalar(nn::sub(quad, logdet), dim_ * kHalfLog2Pi);
}

double gaussian_nll(const Eigen::RowVectorXd& latent, double logdet) {
  return static_cast<double>(latent.size()) * kHalfLog2Pi + 0.5 * latent.squaredNorm() - logdet;
}

std::pair<Eigen::RowVectorXd, double> FlowModel::forward(const nn::ParamStore& store,
                                                         const Eigen::RowVectorXd& f) const {
  if (f.size() != dim_)
    throw ShapeError("flow: expected " + std::to_string(dim_) + " features, got " +
                     std::to_string(f.size()));
  if (!f.allFinite()) throw NumericError("flow: non-finite input");
  Eigen::RowVectorXd x = f;
  double logdet = 0.0;
  for (const auto& layer : layers_) {
    const Matrix q = nn::qr_positive(store[layer.basis].value).first;
    const Eigen::RowVectorXd log_scale = store[layer.log_scale].value.row(0);
    Eigen::RowVectorXd pre = (x * q.transpose()).cwiseProduct(log_scale.array().exp().matrix()) +
                             store[layer.bias].value.row(0);
    logdet += log_scale.sum();
    if (layer.slope) {
      const auto& slope = store[*layer.slope].value;
      for (Eigen::Index i = 0; i < pre.size(); ++i)
        if (pre[i] < 0.0) {
          pre[i] *= slope(0, i);
          logdet += std::log(slope(0, i));
        }
    }
    if (!pre.allFinite()) throw NumericError("flow: non-finite intermediate value");
    x = pre;
  }
  return {x, logdet};
}

Eigen::RowVectorXd FlowModel::inverse(const nn::ParamStore& store,
                                      const Eigen::RowVectorXd& s) const {
  if (s.size() != dim_)
    throw ShapeError("flow inverse: expected " + std::to_string(dim_) + " values, got " +
                     std::to_string(s.size()));
  Eigen::RowVectorXd x = s;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    if (it->slope) {
      const auto& slope = store[*it->slope].value;
      for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x[i] < 0.0) x[i] /= slope(0, i);
    }
    x -= store[it->bias].value.row(0);
    x = x.cwiseQuotient(store[it->log_scale].value.row(0).array().exp().matrix());
    x = x * nn::qr_positive(store[it->basis].value).first;
  }
  if (!x.allFinite()) throw NumericError("flow inverse: non-finite result");
  return x;
}

double FlowModel::nll(const nn::ParamStore& store, const Eigen::RowVectorXd& f) const {
  auto [s, logdet] = forward(store, f);
  return gaussian_nll(s, logdet);
}

}  // namespace h2iad
