#include "h2iad/params.hpp"

#include "h2iad/error.hpp"

#include <algorithm>
#include <cmath>

namespace h2iad::nn {

namespace {

void round_to_float(Matrix& m, double min_value) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double v = std::max(m.data()[i], min_value);
    m.data()[i] = static_cast<double>(static_cast<float>(v));
  }
}

}  // namespace

ParamId ParamStore::add(std::string name, Matrix init, double min_value) {
  round_to_float(init, min_value);
  params_.push_back(Parameter{std::move(name), std::move(init), min_value});
  return params_.size() - 1;
}

std::size_t ParamStore::scalar_count(std::span<const ParamId> ids) const {
  std::size_t n = 0;
  for (ParamId id : ids) n += static_cast<std::size_t>(params_[id].value.size());
  return n;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

std::vector<Var> ParamStore::bind(Tape& tape, bool requires_grad) const {
  std::vector<Var> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(tape.leaf(p.value, requires_grad));
  return out;
}

void ParamStore::canonicalize() {
  for (auto& p : params_) round_to_float(p.value, p.min_value);
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, stddev);
  return m;
}

Adam::Adam(const ParamStore& store, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  for (const auto& p : store.entries()) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adam::step(ParamStore& store, std::span<const Matrix> grads, double lr) {
  if (grads.size() != store.size()) throw ShapeError("adam: gradient count mismatch");
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
    auto& value = store[i].value;
    value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + epsilon_);
  }
  store.canonicalize();
}

void clip_grad_norm(std::span<Matrix> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0)
    for (auto& g : grads) g *= max_norm / norm;
}

}  // namespace h2iad::nn
