#include "h2iad/autodiff.hpp"
#include "h2iad/error.hpp"
#include "h2iad/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

namespace h2iad::nn {
namespace {

Matrix random_matrix(Rng& rng, int rows, int cols, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Contracts an op's output against fixed random weights so every output
// element contributes to the checked scalar.
Var weighted(Tape& tape, Var out, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(out, tape.constant(random_matrix(rng, out.rows(), out.cols()))));
}

constexpr double kTol = 1e-4;
constexpr double kEps = 1e-6;

// --- attention values --------------------------------------------------------

TEST(Attention, SingleKeyReturnsItsValue) {
  Rng rng(1);
  const Matrix q = random_matrix(rng, 4, 3);
  const Matrix k = random_matrix(rng, 1, 3);
  const Matrix v = random_matrix(rng, 1, 3);
  const Matrix out = scaled_dot_attention(q, k, v);
  for (int r = 0; r < 4; ++r) EXPECT_LT((out.row(r) - v.row(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Attention, IdenticalKeysAverageValues) {
  Rng rng(2);
  const Matrix q = random_matrix(rng, 3, 4);
  Matrix k(5, 4);
  k.rowwise() = random_matrix(rng, 1, 4).row(0);
  const Matrix v = random_matrix(rng, 5, 4);
  const Matrix out = scaled_dot_attention(q, k, v);
  const Eigen::RowVectorXd mean = v.colwise().mean();
  for (int r = 0; r < 3; ++r) EXPECT_LT((out.row(r) - mean).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Attention, TwoByTwoExample) {
  Matrix q(1, 2), k(2, 2), v(2, 2);
  q << 1, 0;
  k << 1, 0, 0, 1;
  v << 1, 0, 0, 1;
  const double e = std::exp(1.0 / std::sqrt(2.0));
  const Matrix out = scaled_dot_attention(q, k, v);
  EXPECT_NEAR(out(0, 0), e / (e + 1.0), 1e-12);
  EXPECT_NEAR(out(0, 1), 1.0 / (e + 1.0), 1e-12);
  EXPECT_NEAR(out(0, 0), 0.6698, 5e-5);
  EXPECT_NEAR(out(0, 1), 0.3302, 5e-5);
}

TEST(Attention, OutputsStayInsideValueEnvelope) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix q = random_matrix(rng, 4, 6, -3, 3);
    const Matrix k = random_matrix(rng, 7, 6, -3, 3);
    const Matrix v = random_matrix(rng, 7, 6, -3, 3);
    const Matrix out = scaled_dot_attention(q, k, v);
    for (int c = 0; c < 6; ++c) {
      EXPECT_GE(out.col(c).minCoeff(), v.col(c).minCoeff() - 1e-12);
      EXPECT_LE(out.col(c).maxCoeff(), v.col(c).maxCoeff() + 1e-12);
    }
  }
}

TEST(Attention, KeyValuePermutationInvariance) {
  Rng rng(4);
  const Matrix q = random_matrix(rng, 3, 4);
  const Matrix k = random_matrix(rng, 6, 4);
  const Matrix v = random_matrix(rng, 6, 4);
  const auto perm = rng.permutation(6);
  Matrix kp(6, 4), vp(6, 4);
  for (int i = 0; i < 6; ++i) {
    kp.row(i) = k.row(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]));
    vp.row(i) = v.row(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]));
  }
  EXPECT_LT((scaled_dot_attention(q, kp, vp) - scaled_dot_attention(q, k, v)).cwiseAbs().maxCoeff(),
            1e-12);
}

TEST(Attention, LogitRowShiftInvariance) {
  // Adding u to every key shifts row r of QK^T by q_r . u, a per-row constant.
  Rng rng(5);
  const Matrix q = random_matrix(rng, 3, 4);
  const Matrix k = random_matrix(rng, 5, 4);
  const Matrix v = random_matrix(rng, 5, 4);
  Matrix shifted = k;
  shifted.rowwise() += random_matrix(rng, 1, 4, 50, 100).row(0);
  EXPECT_LT((scaled_dot_attention(q, shifted, v) - scaled_dot_attention(q, k, v)).cwiseAbs().maxCoeff(),
            1e-6);
}

TEST(Attention, LargeLogitsStayFinite) {
  Matrix q(1, 2), k(2, 2), v(2, 2);
  q << 1e4, 0;
  k << 1e4, 0, -1e4, 0;
  v << 1, 2, 3, 4;
  const Matrix out = scaled_dot_attention(q, k, v);
  EXPECT_TRUE(out.allFinite());
  EXPECT_NEAR(out(0, 0), 1.0, 1e-12);
}

TEST(Attention, ShapeMismatchThrows) {
  EXPECT_THROW(scaled_dot_attention(Matrix::Ones(2, 3), Matrix::Ones(2, 4), Matrix::Ones(2, 4)),
               ShapeError);
  EXPECT_THROW(scaled_dot_attention(Matrix::Ones(2, 3), Matrix::Ones(2, 3), Matrix::Ones(3, 3)),
               ShapeError);
}

TEST(Attention, HeadsWorkOnColumnBlocks) {
  Rng rng(6);
  const Matrix q = random_matrix(rng, 3, 8);
  const Matrix k = random_matrix(rng, 5, 8);
  const Matrix v = random_matrix(rng, 5, 8);
  Tape tape;
  const Matrix out = attention(tape.constant(q), tape.constant(k), tape.constant(v), 2).value();
  for (int h = 0; h < 2; ++h) {
    const Matrix expect = scaled_dot_attention(q.middleCols(4 * h, 4), k.middleCols(4 * h, 4),
                                               v.middleCols(4 * h, 4));
    EXPECT_LT((out.middleCols(4 * h, 4) - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
}

// --- gradient_check itself ---------------------------------------------------

TEST(GradientCheck, Quadratic) {
  Matrix x(1, 3);
  x << 1, 2, 3;
  Tape tape;
  Var v = tape.leaf(x);
  Var f = row_sum_squares(v);
  tape.backward(f);
  EXPECT_EQ(v.grad(), (Matrix(1, 3) << 2, 4, 6).finished());
  EXPECT_LT(gradient_check([](Tape&, Var a) { return sum(row_sum_squares(a)); }, x, 1e-4), 1e-6);
}

TEST(GradientCheck, ConstantFunction) {
  Matrix x(2, 2);
  x << 1, -2, 3, 0.5;
  const double err =
      gradient_check([](Tape& t, Var) { return t.constant(Matrix::Constant(1, 1, 4.0)); }, x, 1e-4);
  EXPECT_LT(err, 1e-8);
}

TEST(GradientCheck, RejectsBadEpsilon) {
  const Matrix x = Matrix::Ones(1, 2);
  auto fn = [](Tape&, Var a) { return sum(a); };
  EXPECT_THROW(gradient_check(fn, x, 1e-7), std::invalid_argument);
  EXPECT_THROW(gradient_check(fn, x, 1e-2), std::invalid_argument);
}

TEST(GradientCheck, NonFiniteOutputThrows) {
  const Matrix x = Matrix::Constant(1, 2, 800.0);
  EXPECT_THROW(gradient_check([](Tape&, Var a) { return sum(exp(a)); }, x, 1e-4), NumericError);
}

TEST(GradientCheck, DetectsAWrongGradient) {
  // exp with a deliberately broken backward must be caught.
  auto broken = [](Tape& tape, Var a) {
    Var out = tape.record(a.value().array().exp().matrix(), {a}, [a](Tape& t, int self) {
      t.accumulate(a, 2.0 * t.grad(self));
    });
    return sum(out);
  };
  EXPECT_GT(gradient_check(broken, Matrix::Ones(1, 3), 1e-5), 0.1);
}

// --- gradients of every op ---------------------------------------------------

struct OpCase {
  const char* name;
  std::vector<Matrix> inputs;
  ScalarFn fn;
};

std::vector<OpCase> op_cases() {
  Rng rng(42);
  auto m = [&](int r, int c) { return random_matrix(rng, r, c); };
  // Values bounded away from zero so PReLU's kink is never straddled.
  auto away = [&](int r, int c) {
    Matrix x = m(r, c);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += x.data()[i] < 0 ? -0.2 : 0.2;
    return x;
  };
  auto positive = [&](int r, int c) { return random_matrix(rng, r, c, 0.2, 1.5); };
  std::vector<OpCase> cases;
  auto add_case = [&](const char* name, std::vector<Matrix> in, ScalarFn fn) {
    cases.push_back({name, std::move(in), std::move(fn)});
  };
  add_case("matmul", {m(3, 4), m(4, 2)}, [](Tape& t, auto v) { return weighted(t, matmul(v[0], v[1]), 1); });
  add_case("transpose", {m(3, 2)}, [](Tape& t, auto v) { return weighted(t, transpose(v[0]), 2); });
  add_case("add", {m(3, 2), m(3, 2)}, [](Tape& t, auto v) { return weighted(t, add(v[0], v[1]), 3); });
  add_case("add_row", {m(3, 2), m(1, 2)}, [](Tape& t, auto v) { return weighted(t, add(v[0], v[1]), 4); });
  add_case("add_scalar_var", {m(3, 2), m(1, 1)}, [](Tape& t, auto v) { return weighted(t, add(v[0], v[1]), 5); });
  add_case("sub", {m(3, 2), m(1, 2)}, [](Tape& t, auto v) { return weighted(t, sub(v[0], v[1]), 6); });
  add_case("mul", {m(3, 2), m(3, 2)}, [](Tape& t, auto v) { return weighted(t, mul(v[0], v[1]), 7); });
  add_case("mul_row", {m(3, 2), m(1, 2)}, [](Tape& t, auto v) { return weighted(t, mul(v[0], v[1]), 8); });
  add_case("mul_scalar", {m(3, 2), m(1, 1)}, [](Tape& t, auto v) { return weighted(t, mul(v[0], v[1]), 9); });
  add_case("scale", {m(2, 3)}, [](Tape& t, auto v) { return weighted(t, scale(v[0], -1.7), 10); });
  add_case("add_scalar", {m(2, 3)}, [](Tape& t, auto v) { return weighted(t, add_scalar(v[0], 0.3), 11); });
  add_case("exp", {m(2, 3)}, [](Tape& t, auto v) { return weighted(t, exp(v[0]), 12); });
  add_case("gelu", {random_matrix(rng, 3, 4, -3, 3)}, [](Tape& t, auto v) { return weighted(t, gelu(v[0]), 13); });
  add_case("layer_norm", {m(3, 5), m(1, 5), m(1, 5)},
           [](Tape& t, auto v) { return weighted(t, layer_norm(v[0], v[1], v[2]), 14); });
  add_case("attention", {m(3, 4), m(5, 4), m(5, 4)},
           [](Tape& t, auto v) { return weighted(t, attention(v[0], v[1], v[2], 2), 15); });
  add_case("self_attention", {m(4, 4)},
           [](Tape& t, auto v) { return weighted(t, attention(v[0], v[0], v[0], 1), 16); });
  add_case("mean_rows", {m(4, 3)}, [](Tape& t, auto v) { return weighted(t, mean_rows(v[0]), 17); });
  add_case("concat_cols", {m(2, 3), m(2, 2)},
           [](Tape& t, auto v) { return weighted(t, concat_cols(v[0], v[1]), 18); });
  add_case("concat_rows", {m(2, 3), m(1, 3), m(3, 3)}, [](Tape& t, auto v) {
    return weighted(t, concat_rows(std::span<const Var>(v.data(), 3)), 19);
  });
  add_case("sum", {m(2, 3)}, [](Tape&, auto v) { return sum(v[0]); });
  add_case("mean", {m(2, 3)}, [](Tape&, auto v) { return scale(mean(v[0]), 3.0); });
  add_case("row_sum_squares", {m(3, 4)},
           [](Tape& t, auto v) { return weighted(t, row_sum_squares(v[0]), 20); });
  add_case("row_sum", {m(3, 4)}, [](Tape& t, auto v) { return weighted(t, row_sum(v[0]), 21); });
  add_case("prelu", {away(4, 3), positive(1, 3)},
           [](Tape& t, auto v) { return weighted(t, prelu(v[0], v[1]), 22); });
  add_case("prelu_log_slope", {away(4, 3), positive(1, 3)},
           [](Tape& t, auto v) { return weighted(t, prelu_log_slope(v[0], v[1]), 23); });
  add_case("qr_orthogonal", {m(4, 4)},
           [](Tape& t, auto v) { return weighted(t, qr_orthogonal(v[0]), 24); });
  return cases;
}

TEST(OpGradients, EveryOpMatchesFiniteDifferences) {
  for (const auto& c : op_cases()) {
    const double err = gradient_check(c.fn, c.inputs, kEps);
    EXPECT_LT(err, kTol) << c.name;
  }
}

TEST(OpGradients, ChainedOpsAccumulateThroughReuse) {
  Rng rng(7);
  const std::vector<Matrix> in{random_matrix(rng, 3, 4), random_matrix(rng, 4, 4)};
  auto fn = [](Tape& t, std::span<const Var> v) {
    Var h = gelu(matmul(v[0], v[1]));
    Var q = qr_orthogonal(v[1]);
    return weighted(t, add(matmul(h, q), attention(h, h, v[0], 2)), 30);
  };
  EXPECT_LT(gradient_check(fn, in, kEps), kTol);
}

// --- value checks ------------------------------------------------------------

TEST(Ops, LayerNormStandardizesRows) {
  Rng rng(8);
  Tape tape;
  const Matrix x = random_matrix(rng, 3, 6, -5, 5);
  const Matrix out =
      layer_norm(tape.constant(x), tape.constant(Matrix::Ones(1, 6)), tape.constant(Matrix::Zero(1, 6)))
          .value();
  for (int r = 0; r < 3; ++r) {
    const double mean = out.row(r).mean();
    const double var = (out.row(r).array() - mean).square().mean();
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-3);
  }
}

TEST(Ops, GeluReferenceValues) {
  Tape tape;
  Matrix x(1, 3);
  x << -1, 0, 2;
  const Matrix y = gelu(tape.constant(x)).value();
  for (int i = 0; i < 3; ++i)
    EXPECT_NEAR(y(0, i), 0.5 * x(0, i) * (1 + std::erf(x(0, i) / std::sqrt(2.0))), 1e-15);
}

TEST(Ops, QrFactorHasPositiveDiagonalAndReconstructs) {
  Rng rng(9);
  const Matrix a = random_matrix(rng, 5, 5);
  const auto [q, r] = qr_positive(a);
  EXPECT_LT((q * r - a).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((q.transpose() * q - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-12);
  for (int i = 0; i < 5; ++i) EXPECT_GT(r(i, i), 0.0);
  EXPECT_LT(r.triangularView<Eigen::StrictlyLower>().toDenseMatrix().cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ops, PreluAndLogSlope) {
  Tape tape;
  Matrix x(2, 3), a(1, 3);
  x << -2, 1, -1, 3, -4, 0.5;
  a << 0.5, 0.25, 2;
  const Matrix y = prelu(tape.constant(x), tape.constant(a)).value();
  EXPECT_EQ(y, (Matrix(2, 3) << -1, 1, -2, 3, -1, 0.5).finished());
  const Matrix ls = prelu_log_slope(tape.constant(x), tape.constant(a)).value();
  EXPECT_NEAR(ls(0, 0), std::log(0.5) + std::log(2.0), 1e-15);
  EXPECT_NEAR(ls(1, 0), std::log(0.25), 1e-15);
}

TEST(Ops, BroadcastShapeMismatchThrows) {
  Tape tape;
  EXPECT_THROW(add(tape.constant(Matrix::Ones(2, 3)), tape.constant(Matrix::Ones(2, 2))), ShapeError);
  EXPECT_THROW(matmul(tape.constant(Matrix::Ones(2, 3)), tape.constant(Matrix::Ones(2, 3))), ShapeError);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape tape;
  Var a = tape.leaf(Matrix::Ones(1, 2));
  Var c = tape.constant(Matrix::Ones(1, 2));
  tape.backward(sum(mul(a, c)));
  EXPECT_FALSE(c.requires_grad());
  EXPECT_EQ(a.grad(), Matrix::Ones(1, 2));
}

}  // namespace
}  // namespace h2iad::nn
