#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "igc/autodiff/adam.hpp"
#include "igc/autodiff/ops.hpp"

using namespace igc;
using ad::Tensor;

TEST(Ops, MatmulIdentity) {
  Tensor I = Tensor::constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor M = Tensor::constant({3, 3}, {1.5, -2, 3, 4, 5.25, -6, 7, 8, 9});
  Tensor out = ad::matmul(I, M);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(out[i], M[i]);
}

TEST(Ops, SoftmaxRowsSumToOne) {
  Rng rng(1, "softmax");
  std::vector<double> v(5 * 7);
  for (auto& x : v) x = rng.normal(0.0, 10.0);
  Tensor s = ad::softmax(Tensor::constant({5, 7}, v), -1);
  for (std::size_t r = 0; r < 5; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 7; ++c) sum += s[r * 7 + c];
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Ops, EluClosedForm) {
  EXPECT_NEAR(ad::elu(Tensor::scalar(-1.0)).item(), std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_NEAR(ad::elu(Tensor::scalar(-1.0)).item(), -0.63212, 1e-5);
}

TEST(Ops, ShapeMismatchIsDimensionError) {
  EXPECT_THROW(ad::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
  EXPECT_THROW(ad::add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
  EXPECT_THROW(ad::concat({Tensor::zeros({2, 3}), Tensor::zeros({3, 3})}, 1), DimensionError);
  EXPECT_THROW(Tensor::constant({2, 2}, {1, 2, 3}), DimensionError);
}

TEST(Ops, DomainErrors) {
  EXPECT_THROW(ad::softmax(Tensor::zeros({2, 0}), -1), DomainError);
  EXPECT_THROW(ad::log(Tensor::zeros({0})), DomainError);
  EXPECT_THROW(ad::log(Tensor::constant({2}, {1.0, -1.0})), DomainError);
}

TEST(Ops, ResultAttachesOnlyWhenInputRequiresGrad) {
  Tensor c = Tensor::constant({2}, {1, 2});
  Tensor p = Tensor::parameter({2}, {1, 2});
  EXPECT_FALSE(ad::square(c).requires_grad());
  EXPECT_TRUE(ad::square(p).requires_grad());
  EXPECT_FALSE(ad::square(p).detach().requires_grad());
  EXPECT_FALSE(ad::square(p).detach().node_id().has_value());
  {
    ad::NoGradGuard ng;
    EXPECT_FALSE(ad::square(p).requires_grad());
  }
}

TEST(Ops, DropoutZeroRateIsIdentityInBothModes) {
  Tensor x = Tensor::parameter({4}, {1, -2, 3, 4});
  Rng rng(3, "d");
  for (bool training : {false, true}) {
    Tensor y = ad::dropout(x, 0.0, training, &rng);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y[i], x[i]);
  }
  Tensor y = ad::dropout(x, 0.7, false, nullptr);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Ops, DropoutIsUnbiasedInTraining) {
  const std::size_t n = 100000;
  Rng rng(11, "dropout-mean");
  Tensor x = Tensor::full({n}, 2.0);
  Tensor y = ad::dropout(x, 0.4, true, &rng);
  double m = 0.0;
  for (double v : y.values()) m += v;
  m /= static_cast<double>(n);
  EXPECT_NEAR(m, 2.0, 0.02);
}

TEST(Ops, LayerNormRowsAreStandardized) {
  Rng rng(5, "ln");
  std::vector<double> v(4 * 9);
  for (auto& x : v) x = rng.normal(3.0, 2.0);
  // The normalization constant is sqrt(var + eps); with eps -> 0 the row variance is exactly 1.
  Tensor y = ad::layer_norm(Tensor::constant({4, 9}, v), 1e-14);
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0.0, s = 0.0;
    for (std::size_t c = 0; c < 9; ++c) m += y[r * 9 + c];
    m /= 9.0;
    for (std::size_t c = 0; c < 9; ++c) s += (y[r * 9 + c] - m) * (y[r * 9 + c] - m);
    EXPECT_NEAR(m, 0.0, 1e-9);
    EXPECT_NEAR(s / 9.0, 1.0, 1e-9);
  }
}

TEST(Ops, RelativeBiasClampsDistances) {
  Tensor table = Tensor::constant({3}, {-1.0, 0.0, 1.0});
  Tensor b = ad::rel_position_bias(table, 3);
  const double expect[9] = {0, 1, 1, -1, 0, 1, -1, -1, 0};
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(b[i], expect[i]);
}

TEST(Backward, PowerRule) {
  Tensor x = Tensor::parameter({}, {3.0});
  ad::square(x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, DetachedFactorContributesNoPath) {
  Tensor x = Tensor::parameter({}, {2.0});
  Tensor y = ad::mul(ad::square(x).detach(), x);
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
}

TEST(Backward, UnreachableParameterHasNoGrad) {
  Tensor x = Tensor::parameter({2}, {1, 2});
  Tensor unused = Tensor::parameter({2}, {3, 4});
  ad::sum(ad::square(x)).backward();
  EXPECT_TRUE(x.has_grad());
  EXPECT_FALSE(unused.has_grad());
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x = Tensor::parameter({2}, {1, 2});
  EXPECT_THROW(ad::square(x).backward(), ContractError);
  EXPECT_THROW(Tensor::constant({}, {1.0}).backward(), ContractError);
}

TEST(Backward, SharedSubgraphAccumulates) {
  Tensor x = Tensor::parameter({}, {1.5});
  Tensor s = ad::square(x);
  ad::add(s, ad::mul(s, x)).backward();  // x^2 + x^3
  EXPECT_NEAR(x.grad()[0], 2 * 1.5 + 3 * 1.5 * 1.5, 1e-14);
}

TEST(Backward, SigmoidMseMatchesFiniteDifferences) {
  Rng rng(42, "w");
  std::vector<double> w(3), x(3);
  for (auto& v : w) v = rng.normal();
  for (auto& v : x) v = rng.normal();
  const double y = 0.3;
  auto f = [&](const std::vector<double>& wv) {
    double z = 0.0;
    for (int i = 0; i < 3; ++i) z += wv[i] * x[i];
    const double s = 1.0 / (1.0 + std::exp(-z));
    return (s - y) * (s - y);
  };
  Tensor W = Tensor::parameter({3, 1}, w);
  ad::mse_loss(ad::sigmoid(ad::matmul(Tensor::constant({1, 3}, x), W)), Tensor::constant({1, 1}, {y})).backward();
  for (int i = 0; i < 3; ++i) {
    auto p = w, m = w;
    p[i] += 1e-5;
    m[i] -= 1e-5;
    const double fd = (f(p) - f(m)) / 2e-5;
    EXPECT_LT(std::abs(W.grad()[i] - fd) / std::max(std::abs(fd), 1e-12), 1e-4);
  }
}

TEST(Backward, DeterministicAcrossRebuilds) {
  auto run = [] {
    Rng rng(9, "det");
    std::vector<double> a(12), b(8);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    Tensor A = Tensor::parameter({3, 4}, a), B = Tensor::parameter({4, 2}, b);
    Rng d(9, "drop");
    ad::mean(ad::dropout(ad::tanh(ad::matmul(A, B)), 0.5, true, &d)).backward();
    std::vector<double> g(A.grad().begin(), A.grad().end());
    g.insert(g.end(), B.grad().begin(), B.grad().end());
    return g;
  };
  EXPECT_EQ(run(), run());
}

class GradientCheck : public ::testing::TestWithParam<check::GradCase> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  const auto r = check::check_gradients(GetParam(), 20260101);
  EXPECT_EQ(r.points, 20);
  EXPECT_LT(r.max_rel_err, 1e-4) << r.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradientCheck, ::testing::ValuesIn(check::op_gradient_cases()),
                         [](const auto& info) { return info.param.name; });

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor x = Tensor::parameter({}, {1.0});
  ad::Adam opt({x}, {.lr = 0.1, .eps = 1e-8});
  ad::scale(x, 3.0).backward();
  opt.step();
  EXPECT_NEAR(x.item(), 0.9, 1e-8);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  Tensor x = Tensor::parameter({2}, {1.0, -1.0});
  ad::Adam opt({x});
  ad::scale(ad::sum(x), 0.0).backward();
  opt.step();
  EXPECT_EQ(x[0], 1.0);
  EXPECT_EQ(x[1], -1.0);
}

TEST(Adam, TwoStepsOnSquareDecrease) {
  Tensor x = Tensor::parameter({}, {1.0});
  ad::Adam opt({x}, {.lr = 0.1});
  // Hand-rolled reference trace.
  double ref = 1.0, m = 0.0, v = 0.0;
  for (int k = 1; k <= 2; ++k) {
    const double before = x.item();
    opt.zero_grad();
    ad::square(x).backward();
    opt.step();
    EXPECT_LT(x.item(), before);
    const double g = 2.0 * ref;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    ref -= 0.1 * (m / (1 - std::pow(0.9, k))) / (std::sqrt(v / (1 - std::pow(0.999, k))) + 1e-8);
    EXPECT_DOUBLE_EQ(x.item(), ref);
  }
}

TEST(Adam, NanGradientPoisonsStep) {
  Tensor x = Tensor::parameter({}, {1.0});
  ad::Adam opt({x});
  ad::mul(x, Tensor::scalar(std::nan(""))).backward();
  EXPECT_THROW(opt.step(), PoisonedStateError);
  EXPECT_EQ(x.item(), 1.0);
  EXPECT_EQ(opt.steps(), 0u);
}

TEST(Adam, ClipGradNormRescales) {
  Tensor x = Tensor::parameter({2}, {3.0, 4.0});
  ad::scale(ad::sum(ad::square(x)), 0.5).backward();  // grad = x, norm 5
  std::vector<Tensor> ps{x};
  EXPECT_DOUBLE_EQ(ad::clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(x.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(x.grad()[1], 0.8, 1e-15);
}
