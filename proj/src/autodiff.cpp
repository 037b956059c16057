#include "h2iad/autodiff.hpp"

#include "h2iad/error.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace h2iad::nn {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Matrix value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, requires_grad});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  bool needs = false;
  for (const Var& p : parents) needs = needs || requires_grad(p.id());
  nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(backward) : nullptr, needs});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw std::invalid_argument("backward: variable belongs to another tape");
  const auto& rv = value(root.id());
  if (rv.rows() != 1 || rv.cols() != 1) throw ShapeError("backward: root must be 1 x 1");
  const auto last = static_cast<std::size_t>(root.id());
  for (std::size_t i = 0; i <= last; ++i) {
    auto& n = nodes_[i];
    if (n.requires_grad) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  if (!nodes_[last].requires_grad) return;
  nodes_[last].grad(0, 0) = 1.0;
  for (std::size_t i = last + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this, static_cast<int>(i));
  }
}

namespace {

enum class Broadcast { kSame, kRow, kScalar };

Broadcast broadcast_kind(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kSame;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  throw ShapeError(std::string(op) + ": cannot broadcast " + std::to_string(b.rows()) + "x" +
                   std::to_string(b.cols()) + " onto " + std::to_string(a.rows()) + "x" +
                   std::to_string(a.cols()));
}

// Gradient reduction for a broadcast second operand.
Matrix reduce_to(const Matrix& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::kSame: return g;
    case Broadcast::kRow: return g.colwise().sum();
    case Broadcast::kScalar: return Matrix::Constant(1, 1, g.sum());
  }
  return g;
}

Matrix expand(const Matrix& b, Eigen::Index rows, Eigen::Index cols, Broadcast kind) {
  switch (kind) {
    case Broadcast::kSame: return b;
    case Broadcast::kRow: return b.replicate(rows, 1);
    case Broadcast::kScalar: return Matrix::Constant(rows, cols, b(0, 0));
  }
  return b;
}

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("operands live on different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                     std::to_string(b.rows()) + " differ");
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape();
  return t.record(a.value().transpose(), {a},
                  [a](Tape& t, int self) { t.accumulate(a, t.grad(self).transpose()); });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  const auto kind = broadcast_kind(a.value(), b.value(), "add");
  Tape& t = *a.tape();
  Matrix out = a.value() + expand(b.value(), a.rows(), a.cols(), kind);
  return t.record(std::move(out), {a, b}, [a, b, kind](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.accumulate(a, g);
    if (b.requires_grad()) t.accumulate(b, reduce_to(g, kind));
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  const auto kind = broadcast_kind(a.value(), b.value(), "sub");
  Tape& t = *a.tape();
  Matrix out = a.value() - expand(b.value(), a.rows(), a.cols(), kind);
  return t.record(std::move(out), {a, b}, [a, b, kind](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.accumulate(a, g);
    if (b.requires_grad()) t.accumulate(b, -reduce_to(g, kind));
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  const auto kind = broadcast_kind(a.value(), b.value(), "mul");
  Tape& t = *a.tape();
  Matrix bx = expand(b.value(), a.rows(), a.cols(), kind);
  Matrix out = a.value().cwiseProduct(bx);
  return t.record(std::move(out), {a, b}, [a, b, kind, bx = std::move(bx)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (a.requires_grad()) t.accumulate(a, g.cwiseProduct(bx));
    if (b.requires_grad()) t.accumulate(b, reduce_to(g.cwiseProduct(a.value()), kind));
  });
}

Var scale(Var a, double factor) {
  Tape& t = *a.tape();
  return t.record(a.value() * factor, {a},
                  [a, factor](Tape& t, int self) { t.accumulate(a, t.grad(self) * factor); });
}

Var add_scalar(Var a, double offset) {
  Tape& t = *a.tape();
  Matrix out = a.value().array() + offset;
  return t.record(std::move(out), {a}, [a](Tape& t, int self) { t.accumulate(a, t.grad(self)); });
}

Var exp(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().array().exp();
  return t.record(std::move(out), {a}, [a](Tape& t, int self) {
    t.accumulate(a, t.grad(self).cwiseProduct(t.value(self)));
  });
}

Var gelu(Var a) {
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  Matrix deriv(x.rows(), x.cols());
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
    out.data()[i] = v * cdf;
    deriv.data()[i] = cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
  }
  return t.record(std::move(out), {a}, [a, deriv = std::move(deriv)](Tape& t, int self) {
    t.accumulate(a, t.grad(self).cwiseProduct(deriv));
  });
}

Var layer_norm(Var x, Var gain, Var bias, double epsilon) {
  const Eigen::Index C = x.cols();
  if (gain.rows() != 1 || gain.cols() != C || bias.rows() != 1 || bias.cols() != C)
    throw ShapeError("layer_norm: gain/bias must be 1 x " + std::to_string(C));
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), C);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std[r] = 1.0 / std::sqrt(var + epsilon);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std[r];
  }
  Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return t.record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (gain.requires_grad()) t.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
        if (bias.requires_grad()) t.accumulate(bias, g.colwise().sum());
        if (x.requires_grad()) {
          Matrix dxhat = g.array().rowwise() * gain.value().row(0).array();
          Matrix dx(g.rows(), g.cols());
          for (Eigen::Index r = 0; r < g.rows(); ++r) {
            const double m1 = dxhat.row(r).mean();
            const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
            dx.row(r) = inv_std[r] * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
          }
          t.accumulate(x, dx);
        }
      });
}

namespace {

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    p.row(r) = (logits.row(r).array() - m).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

}  // namespace

Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols() < 1) throw ShapeError("attention: projection width must be >= 1");
  if (q.cols() != k.cols() || k.cols() != v.cols())
    throw ShapeError("attention: Q, K, V widths differ");
  if (k.rows() != v.rows()) throw ShapeError("attention: K and V row counts differ");
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return softmax_rows(q * k.transpose() * inv) * v;
}

Var attention(Var q, Var k, Var v, int heads) {
  require_same_tape(q, k);
  require_same_tape(q, v);
  const Eigen::Index C = q.cols();
  if (heads < 1 || C % heads != 0)
    throw ShapeError("attention: width " + std::to_string(C) + " not divisible by " +
                     std::to_string(heads) + " heads");
  if (k.cols() != C || v.cols() != C) throw ShapeError("attention: Q, K, V widths differ");
  if (k.rows() != v.rows()) throw ShapeError("attention: K and V row counts differ");
  const Eigen::Index c = C / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(c));
  Tape& t = *q.tape();

  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  Matrix out(q.rows(), C);
  for (int h = 0; h < heads; ++h) {
    const auto cols = Eigen::seqN(h * c, c);
    probs[static_cast<std::size_t>(h)] =
        softmax_rows(q.value()(Eigen::all, cols) * k.value()(Eigen::all, cols).transpose() * inv);
    out(Eigen::all, cols) = probs[static_cast<std::size_t>(h)] * v.value()(Eigen::all, cols);
  }
  return t.record(std::move(out), {q, k, v},
                  [q, k, v, heads, c, inv, probs = std::move(probs)](Tape& t, int self) {
                    const Matrix& g = t.grad(self);
                    Matrix dq = Matrix::Zero(q.rows(), q.cols());
                    Matrix dk = Matrix::Zero(k.rows(), k.cols());
                    Matrix dv = Matrix::Zero(v.rows(), v.cols());
                    for (int h = 0; h < heads; ++h) {
                      const auto cols = Eigen::seqN(h * c, c);
                      const Matrix& p = probs[static_cast<std::size_t>(h)];
                      const Matrix go = g(Eigen::all, cols);
                      dv(Eigen::all, cols) = p.transpose() * go;
                      const Matrix dp = go * v.value()(Eigen::all, cols).transpose();
                      Matrix ds = dp;
                      for (Eigen::Index r = 0; r < ds.rows(); ++r) {
                        const double dot = dp.row(r).dot(p.row(r));
                        ds.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
                      }
                      ds *= inv;
                      dq(Eigen::all, cols) = ds * k.value()(Eigen::all, cols);
                      dk(Eigen::all, cols) = ds.transpose() * q.value()(Eigen::all, cols);
                    }
                    t.accumulate(q, dq);
                    t.accumulate(k, dk);
                    t.accumulate(v, dv);
                  });
}

Var mean_rows(Var a) {
  Tape& t = *a.tape();
  const double n = static_cast<double>(a.rows());
  Matrix out = a.value().colwise().mean();
  return t.record(std::move(out), {a}, [a, n](Tape& t, int self) {
    t.accumulate(a, (t.grad(self) / n).replicate(a.rows(), 1));
  });
}

Var concat_cols(Var a, Var b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
  Tape& t = *a.tape();
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.accumulate(a, g.leftCols(a.cols()));
    t.accumulate(b, g.rightCols(b.cols()));
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape& t = *parts[0].tape();
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  bool needs = false;
  for (const Var& v : parts) {
    if (v.tape() != &t) throw std::invalid_argument("operands live on different tapes");
    if (v.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += v.rows();
    needs = needs || v.requires_grad();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& v : parts) {
    out.middleRows(r, v.rows()) = v.value();
    r += v.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  // Gradient requirement is decided from all parts, not only the first.
  Var anchor = needs ? *std::find_if(inputs.begin(), inputs.end(),
                                     [](const Var& v) { return v.requires_grad(); })
                     : inputs[0];
  return t.record(std::move(out), {anchor}, [inputs = std::move(inputs)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Eigen::Index r = 0;
    for (const Var& v : inputs) {
      t.accumulate(v, g.middleRows(r, v.rows()));
      r += v.rows();
    }
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  return t.record(Matrix::Constant(1, 1, a.value().sum()), {a}, [a](Tape& t, int self) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), t.grad(self)(0, 0)));
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var row_sum_squares(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().rowwise().squaredNorm();
  return t.record(std::move(out), {a}, [a](Tape& t, int self) {
    Matrix d = 2.0 * a.value();
    d.array().colwise() *= t.grad(self).col(0).array();
    t.accumulate(a, d);
  });
}

Var row_sum(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value().rowwise().sum();
  return t.record(std::move(out), {a}, [a](Tape& t, int self) {
    t.accumulate(a, t.grad(self).replicate(1, a.cols()));
  });
}

Var prelu(Var x, Var slope) {
  require_same_tape(x, slope);
  if (slope.rows() != 1 || slope.cols() != x.cols())
    throw ShapeError("prelu: slope must be 1 x " + std::to_string(x.cols()));
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  Matrix out = xv;
  for (Eigen::Index r = 0; r < xv.rows(); ++r)
    for (Eigen::Index c = 0; c < xv.cols(); ++c)
      if (xv(r, c) < 0.0) out(r, c) = slope.value()(0, c) * xv(r, c);
  return t.record(std::move(out), {x, slope}, [x, slope](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& xv = x.value();
    Matrix dx = g;
    Matrix ds = Matrix::Zero(1, xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r)
      for (Eigen::Index c = 0; c < xv.cols(); ++c)
        if (xv(r, c) < 0.0) {
          dx(r, c) = g(r, c) * slope.value()(0, c);
          ds(0, c) += g(r, c) * xv(r, c);
        }
    t.accumulate(x, dx);
    t.accumulate(slope, ds);
  });
}

Var prelu_log_slope(Var x, Var slope) {
  require_same_tape(x, slope);
  if (slope.rows() != 1 || slope.cols() != x.cols())
    throw ShapeError("prelu_log_slope: slope must be 1 x " + std::to_string(x.cols()));
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  const Eigen::ArrayXd log_slope = slope.value().row(0).array().log().transpose();
  Matrix out = Matrix::Zero(xv.rows(), 1);
  for (Eigen::Index r = 0; r < xv.rows(); ++r)
    for (Eigen::Index c = 0; c < xv.cols(); ++c)
      if (xv(r, c) < 0.0) out(r, 0) += log_slope[c];
  return t.record(std::move(out), {slope}, [x, slope](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& xv = x.value();
    Matrix ds = Matrix::Zero(1, xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r)
      for (Eigen::Index c = 0; c < xv.cols(); ++c)
        if (xv(r, c) < 0.0) ds(0, c) += g(r, 0) / slope.value()(0, c);
    t.accumulate(slope, ds);
  });
}

std::pair<Matrix, Matrix> qr_positive(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("qr: matrix must be square");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    if (r(i, i) < 0.0) {
      r.row(i) *= -1.0;
      q.col(i) *= -1.0;
    }
  }
  return {std::move(q), std::move(r)};
}

Var qr_orthogonal(Var a) {
  Tape& t = *a.tape();
  auto [q, r] = qr_positive(a.value());
  for (Eigen::Index i = 0; i < r.rows(); ++i)
    if (r(i, i) == 0.0) throw NumericError("qr: matrix is singular");
  return t.record(std::move(q), {a}, [a, r = std::move(r)](Tape& t, int self) {
    // With A = QR and only Q consumed downstream:
    //   dA = Q * strict_lower(Q^T dQ - dQ^T Q) * R^{-T}
    const Matrix& q = t.value(self);
    const Matrix& gq = t.grad(self);
    const Matrix g = q.transpose() * gq;
    Matrix m = (g - g.transpose()).triangularView<Eigen::StrictlyLower>();
    const Matrix x = q * m;
    const Matrix da = r.triangularView<Eigen::Upper>().solve(x.transpose()).transpose();
    t.accumulate(a, da);
  });
}

// --- gradient verification ---------------------------------------------------

double gradient_check(const ScalarFn& fn, std::span<const Matrix> inputs, double epsilon) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-3))
    throw std::invalid_argument("gradient_check: epsilon must lie in [1e-6, 1e-3]");

  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& m : inputs) leaves.push_back(tape.leaf(m));
    Var out = fn(tape, leaves);
    if (out.rows() != 1 || out.cols() != 1) throw ShapeError("gradient_check: fn must be scalar");
    if (!std::isfinite(out.scalar())) throw NumericError("gradient_check: non-finite output");
    tape.backward(out);
    for (const Var& v : leaves) analytic.push_back(v.grad());
  }

  std::vector<Matrix> probe(inputs.begin(), inputs.end());
  auto evaluate = [&]() {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& m : probe) leaves.push_back(tape.constant(m));
    const double y = fn(tape, leaves).scalar();
    if (!std::isfinite(y)) throw NumericError("gradient_check: non-finite output");
    return y;
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (Eigen::Index e = 0; e < probe[i].size(); ++e) {
      const double orig = probe[i].data()[e];
      probe[i].data()[e] = orig + epsilon;
      const double up = evaluate();
      probe[i].data()[e] = orig - epsilon;
      const double down = evaluate();
      probe[i].data()[e] = orig;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[i].data()[e];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double gradient_check(const std::function<Var(Tape&, Var)>& fn, const Matrix& input,
                      double epsilon) {
  const std::array<Matrix, 1> inputs{input};
  return gradient_check([&](Tape& t, std::span<const Var> v) { return fn(t, v[0]); }, inputs,
                        epsilon);
}

}  // namespace h2iad::nn
