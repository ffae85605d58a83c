#include <gtest/gtest.h>

#include <cmath>

#include "affect/common.hpp"
#include "affect/nn.hpp"
#include "affect/transformer.hpp"
#include "gradcheck.hpp"

using namespace affect;
using namespace affect::nn;
using testing_support::grad_check;
using testing_support::weighted_sum;

namespace {

Rng rng_for(std::uint64_t seed) { return Rng(seed); }

Matrix randn(Eigen::Index r, Eigen::Index c, Rng& rng) { return normal(r, c, 1.0, rng); }

}  // namespace

TEST(Scalars, SigmoidAndSoftplus) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(1.0), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_EQ(sigmoid(-800.0), 0.0);
  EXPECT_EQ(sigmoid(800.0), 1.0);
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(softplus(1000.0), 1000.0);
  EXPECT_TRUE(std::isfinite(softplus(-1000.0)));
}

TEST(Ops, ForwardValues) {
  Tape t;
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  Matrix b(2, 1);
  b << 1, -1;
  const Var va = t.constant(a);
  EXPECT_EQ(t.value(matmul(t, va, t.constant(b))), (Matrix(2, 1) << -1, -1).finished());
  EXPECT_EQ(t.value(mean_rows(t, va)), (Matrix(1, 2) << 2, 3).finished());
  EXPECT_EQ(t.value(select_row(t, va, 1)), (Matrix(1, 2) << 3, 4).finished());
  EXPECT_EQ(t.value(scale(t, va, 2.0))(1, 1), 8.0);
  const int ids[] = {1, 1, 0};
  EXPECT_EQ(t.value(gather_rows(t, va, ids)).row(2), a.row(0));
  EXPECT_THROW(add(t, va, t.constant(b)), DimensionError);
  EXPECT_THROW(matmul(t, va, t.constant(Matrix::Ones(3, 1))), DimensionError);
}

TEST(Ops, LayerNormNormalizesRows) {
  Rng rng = rng_for(3);
  Tape t;
  const Var x = t.constant(randn(4, 6, rng) * 5.0);
  const Matrix y = t.value(layer_norm(t, x, t.constant(Matrix::Ones(1, 6)), t.constant(Matrix::Zero(1, 6))));
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_NEAR(y.row(i).mean(), 0.0, 1e-12);
    EXPECT_NEAR((y.row(i).array() - y.row(i).mean()).square().mean(), 1.0, 1e-4);
  }
}

TEST(Ops, AttentionRowsSumToOne) {
  Rng rng = rng_for(5);
  Tape t;
  const Matrix q = randn(5, 8, rng), k = randn(5, 8, rng), v = randn(5, 8, rng);
  std::vector<Matrix> att;
  multi_head_attention(t, t.constant(q), t.constant(k), t.constant(v), 2, &att);
  ASSERT_EQ(att.size(), 2u);
  for (const auto& a : att) {
    EXPECT_GE(a.minCoeff(), 0.0);
    for (Eigen::Index i = 0; i < a.rows(); ++i) EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-12);
  }
  EXPECT_THROW(multi_head_attention(t, t.constant(q), t.constant(k), t.constant(v), 3), DimensionError);
}

TEST(Ops, SingleHeadAttentionMatchesFormula) {
  Rng rng = rng_for(6);
  const Matrix q = randn(3, 4, rng), k = randn(3, 4, rng), v = randn(3, 4, rng);
  Tape t;
  const Matrix out = t.value(multi_head_attention(t, t.constant(q), t.constant(k), t.constant(v), 1));
  Matrix s = q * k.transpose() / 2.0;
  for (Eigen::Index i = 0; i < 3; ++i) {
    double z = 0;
    for (Eigen::Index j = 0; j < 3; ++j) z += std::exp(s(i, j));
    for (Eigen::Index j = 0; j < 3; ++j) s(i, j) = std::exp(s(i, j)) / z;
  }
  EXPECT_LT((out - s * v).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ops, BceValues) {
  Tape t;
  EXPECT_NEAR(t.scalar(bce_with_logits(t, t.constant(Matrix::Zero(1, 1)), 1.0)), std::log(2.0), 1e-15);
  EXPECT_LT(t.scalar(bce_with_logits(t, t.constant(Matrix::Constant(1, 1, 20.0)), 1.0)), 1e-8);
  const double big = t.scalar(bce_with_logits(t, t.constant(Matrix::Constant(1, 1, 1e6)), 0.0));
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big, 1e6, 1e-6);
}

TEST(Ops, DropoutIdentityWhenNotTraining) {
  Rng rng = rng_for(1);
  Tape t;
  const Var x = t.constant(Matrix::Ones(10, 10));
  ForwardContext eval{false, 0.5, &rng};
  EXPECT_EQ(dropout(t, x, eval).id, x.id);
  ForwardContext train{true, 0.5, &rng};
  const Matrix y = t.value(dropout(t, x, train));
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_TRUE(y.data()[i] == 0.0 || y.data()[i] == 2.0);
  ForwardContext no_rng{true, 0.5, nullptr};
  EXPECT_THROW(dropout(t, x, no_rng), Error);
}

TEST(Ops, NonRecordingTapeRefusesBackward) {
  Tape t(false);
  Parameter p("p", Matrix::Ones(1, 1));
  const Var v = t.parameter(p);
  EXPECT_FALSE(t.needs_grad(v));
  EXPECT_THROW(t.backward(v), Error);
}

TEST(Params, FlattenRoundTripAndChecksum) {
  Rng rng = rng_for(2);
  ParameterStore store;
  store.add("a", randn(2, 3, rng));
  store.add("b", randn(1, 4, rng));
  const auto refs = store.refs();
  EXPECT_EQ(parameter_count(refs), 10u);
  const auto original = flatten(refs);
  const auto sum = checksum(refs);
  auto flat = original;
  flat[7] += 1.0;
  unflatten(refs, flat);
  EXPECT_NE(checksum(refs), sum);
  unflatten(refs, original);
  EXPECT_EQ(checksum(refs), sum);
  EXPECT_THROW(unflatten(refs, std::vector<double>(3)), Error);
}

// Each op is checked on its own against central differences.
class OpGradients : public ::testing::Test {
 protected:
  Rng rng = rng_for(42);
  ParameterStore store;
  Parameter& param(Eigen::Index r, Eigen::Index c) { return store.add("p", randn(r, c, rng)); }

  template <class F>
  void check(F f, double tol = 1e-6) {
    const auto res = grad_check(store.refs(), f);
    EXPECT_LT(res.max_rel_error, tol) << "probes " << res.probes;
  }
};

TEST_F(OpGradients, Elementwise) {
  auto& a = param(3, 4);
  auto& b = param(3, 4);
  auto& row = param(1, 4);
  const Matrix r = randn(3, 4, rng);
  check([&](Tape& t) {
    Var x = add(t, t.parameter(a), t.parameter(b));
    x = add_row(t, x, t.parameter(row));
    x = gelu(t, scale(t, x, 0.7));
    return weighted_sum(t, x, r);
  });
}

TEST_F(OpGradients, LinearAndMatmul) {
  auto& x = param(3, 4);
  auto& w = param(4, 5);
  auto& bias = param(1, 5);
  auto& m = param(5, 2);
  const Matrix r = randn(3, 2, rng);
  check([&](Tape& t) {
    Var y = linear(t, t.parameter(x), t.parameter(w), t.parameter(bias));
    return weighted_sum(t, matmul(t, y, t.parameter(m)), r);
  });
}

TEST_F(OpGradients, LayerNorm) {
  auto& x = param(4, 6);
  auto& g = param(1, 6);
  auto& b = param(1, 6);
  const Matrix r = randn(4, 6, rng);
  check([&](Tape& t) { return weighted_sum(t, layer_norm(t, t.parameter(x), t.parameter(g), t.parameter(b)), r); });
}

TEST_F(OpGradients, Attention) {
  auto& q = param(4, 6);
  auto& k = param(4, 6);
  auto& v = param(4, 6);
  const Matrix r = randn(4, 6, rng);
  check([&](Tape& t) {
    return weighted_sum(t, multi_head_attention(t, t.parameter(q), t.parameter(k), t.parameter(v), 3), r);
  });
}

TEST_F(OpGradients, IndexingOps) {
  auto& table = param(5, 3);
  auto& s = param(4, 1);
  auto& row = param(1, 3);
  const Matrix r = randn(1, 3, rng);
  const int ids[] = {4, 0, 4, 2};
  const std::uint8_t mask[] = {1, 0, 1, 1};
  check([&](Tape& t) {
    Var x = gather_rows(t, t.parameter(table), ids);
    x = scale_rows(t, x, t.parameter(s));
    x = add_masked_row(t, x, t.parameter(row), mask);
    Var m = mean_rows(t, x);
    Var sel = select_row(t, x, 2);
    return weighted_sum(t, add(t, m, sel), r);
  });
}

TEST_F(OpGradients, ScalarsColumnAndBce) {
  auto& a = param(1, 1);
  auto& b = param(1, 1);
  auto& c = param(1, 4);
  Vector base(4);
  base << 0.5, -1.0, 2.0, 0.0;
  check([&](Tape& t) {
    const Var va = t.parameter(a), vb = t.parameter(b);
    const Var xs[] = {va, vb, va};
    Var m = mean_scalars(t, xs);
    std::pair<std::size_t, Var> ov[] = {{1, va}, {3, vb}};
    Var col = assemble_column(t, base, ov);  // 4 x 1
    Var z = matmul(t, t.parameter(c), col);
    return bce_with_logits(t, add(t, m, z), 1.0);
  });
}

TEST(LayerGradients, EncoderStack) {
  Rng rng = rng_for(9);
  ParameterStore store;
  auto stack = EncoderStack::create(store, "enc", 8, 2, 2, 12, rng);
  Parameter& input = store.add("input", normal(5, 8, 1.0, rng));
  const Matrix r = normal(5, 8, 1.0, rng);
  const ForwardContext ctx;
  const auto res = grad_check(store.refs(), [&](Tape& t) { return weighted_sum(t, stack(t, t.parameter(input), ctx), r); });
  EXPECT_LT(res.max_rel_error, 1e-5);
}
