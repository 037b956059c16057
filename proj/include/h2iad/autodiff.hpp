#pragma once

// Reverse-mode differentiation over dense row-major matrices. Every value in
// the model graph is 2-D; vectors are 1 x C rows and scalars are 1 x 1.

#include <Eigen/Core>

#include <deque>
#include <functional>
#include <span>

namespace h2iad::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  // Called with the tape and the node's own id; must accumulate into the
  // gradients of the node's parents.
  using Backward = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  // Records an op result. The backward closure is dropped when none of the
  // parents needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);

  // Seeds d(root)/d(root) = 1 for a 1 x 1 root and propagates to all nodes
  // that require a gradient.
  void backward(Var root);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  // Adds `delta` into the gradient of `target` when it requires one.
  template <typename Expr>
  void accumulate(Var target, const Expr& delta) {
    auto& node = nodes_[static_cast<std::size_t>(target.id())];
    if (node.requires_grad) node.grad += delta;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
};

// --- ops ---------------------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);

// Elementwise add/mul. `b` may match `a`, be a 1 x C row (broadcast over
// rows) or a 1 x 1 scalar.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var exp(Var a);
Var gelu(Var a);

// Row-wise layer normalization with 1 x C gain and bias.
Var layer_norm(Var x, Var gain, Var bias, double epsilon = 1e-5);

// Multi-head scaled dot-product attention. q is Tq x C, k and v are Tk x C;
// each head works on a contiguous C / heads column block.
Var attention(Var q, Var k, Var v, int heads);

Var mean_rows(Var a);           // R x C -> 1 x C
Var concat_cols(Var a, Var b);  // side by side
Var concat_rows(std::span<const Var> parts);  // stacked
Var sum(Var a);                 // -> 1 x 1
Var mean(Var a);                // -> 1 x 1
Var row_sum_squares(Var a);     // R x C -> R x 1
Var row_sum(Var a);             // R x C -> R x 1

// Parametric rectifier with a 1 x C slope row applied to negative inputs.
Var prelu(Var x, Var slope);
// R x 1: sum over columns with x < 0 of log(slope). This is the PReLU part of
// the log-Jacobian-determinant.
Var prelu_log_slope(Var x, Var slope);

// Orthogonal factor of a square matrix, sign-normalized so that R has a
// positive diagonal.
Var qr_orthogonal(Var a);

// --- value-level helpers -----------------------------------------------------

// softmax(Q K^T / sqrt(C)) V for a single head.
Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v);

// Q and R of a square matrix with diag(R) > 0.
std::pair<Matrix, Matrix> qr_positive(const Matrix& a);

// --- gradient verification ---------------------------------------------------

using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

// Max over all input elements of |analytic - numeric| / max(1, |a|, |n|)
// where numeric uses central differences with step `epsilon`.
// Throws std::invalid_argument for epsilon outside [1e-6, 1e-3] and
// NumericError for non-finite function values.
double gradient_check(const ScalarFn& fn, std::span<const Matrix> inputs, double epsilon);
double gradient_check(const std::function<Var(Tape&, Var)>& fn, const Matrix& input,
                      double epsilon);

}  // namespace h2iad::nn
