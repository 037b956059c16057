#pragma once

#include "h2iad/autodiff.hpp"
#include "h2iad/rng.hpp"

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace h2iad::nn {

using ParamId = std::size_t;

struct Parameter {
  std::string name;
  Matrix value;
  // Lower clamp applied after every optimizer step.
  double min_value = -std::numeric_limits<double>::infinity();
};

// Ordered, named collection of learnable matrices. Values are kept exactly
// representable as float32 so checkpoints round-trip bit-for-bit.
class ParamStore {
 public:
  ParamId add(std::string name, Matrix init,
              double min_value = -std::numeric_limits<double>::infinity());

  const Parameter& operator[](ParamId id) const { return params_[id]; }
  Parameter& operator[](ParamId id) { return params_[id]; }
  std::size_t size() const { return params_.size(); }
  const std::vector<Parameter>& entries() const { return params_; }
  std::vector<Parameter>& entries() { return params_; }

  // Number of scalars across `ids`, or across the whole store.
  std::size_t scalar_count(std::span<const ParamId> ids) const;
  std::size_t scalar_count() const;

  // One leaf per parameter, in id order.
  std::vector<Var> bind(Tape& tape, bool requires_grad = true) const;

  // Rounds every value to float32 and applies min_value clamps.
  void canonicalize();

 private:
  std::vector<Parameter> params_;
};

// Weight initializers (float32-rounded by ParamStore::add).
Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);
Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

// Adaptive moment estimation with bias correction.
class Adam {
 public:
  explicit Adam(const ParamStore& store, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);

  void step(ParamStore& store, std::span<const Matrix> grads, double lr);
  long steps() const { return steps_; }

 private:
  double beta1_, beta2_, epsilon_;
  long steps_ = 0;
  std::vector<Matrix> m_, v_;
};

// Rescales `grads` in place so their joint L2 norm is at most max_norm.
void clip_grad_norm(std::span<Matrix> grads, double max_norm);

}  // namespace h2iad::nn
