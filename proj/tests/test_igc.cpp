#include <gtest/gtest.h>

#include <cmath>

#include "igc/datagen/discrete_scm.hpp"
#include "igc/estimators/igc.hpp"
#include "one_step_reference.hpp"

namespace {

using namespace igc;
using igc::testing::plain_one_step_regression;

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double elu(double x) { return x > 0 ? x : std::exp(x) - 1.0; }

Trajectory make_traj(std::uint64_t id, std::vector<double> y, std::vector<double> a) {
  Trajectory tr;
  tr.id = id;
  const std::size_t T = y.size();
  tr.Y = Matrix(T, 1);
  tr.X = Matrix(T, 0);
  tr.A = Matrix(T, 1);
  tr.true_propensities = Matrix(T, 1, 0.5);
  for (std::size_t t = 0; t < T; ++t) {
    tr.Y(t, 0) = y[t];
    tr.A(t, 0) = a[t];
  }
  return tr;
}

Dataset single(Trajectory tr) {
  Dataset d;
  d.dims = Dims{1, 0, 1, 0};
  d.items.push_back(std::move(tr));
  return d;
}

Matrix plan(std::initializer_list<double> v) {
  Matrix m(v.size(), 1);
  std::size_t i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

IgcConfig small_config(std::size_t tau, BackboneKind kind = BackboneKind::lstm) {
  IgcConfig c;
  c.tau = tau;
  c.backbone.kind = kind;
  c.backbone.hidden = 8;
  c.backbone.repr = 4;
  c.backbone.heads = 2;
  c.backbone.ff_hidden = 8;
  c.head_hidden = 6;
  return c;
}

void set(const nn::ParamStore& store, const std::string& name, std::vector<double> v) {
  auto t = store.get(name);
  ASSERT_EQ(t.size(), v.size()) << name;
  std::copy(v.begin(), v.end(), t.mutable_values().begin());
}

// Linear recursion Y_{t+1} = 0.5 Y_t + A_t with coin-flip treatments.
Dataset linear_dataset(std::size_t N, std::size_t T, std::uint64_t seed) {
  Dataset d;
  d.dims = Dims{1, 0, 1, 0};
  for (std::size_t i = 0; i < N; ++i) {
    Rng r = Rng(seed, "linear").fork(i);
    std::vector<double> y(T), a(T);
    y[0] = r.normal();
    for (std::size_t t = 0; t < T; ++t) {
      a[t] = r.bernoulli(0.5) ? 1.0 : 0.0;
      if (t + 1 < T) y[t + 1] = 0.5 * y[t] + a[t];
    }
    d.items.push_back(make_traj(i, y, a));
  }
  return d;
}

TEST(IgcModel, HeadLayout) {
  const Dims dims{2, 3, 2, 1};
  IgcModel m(small_config(3), dims, 0);
  EXPECT_EQ(m.net().head_count(), 3u);
  for (std::size_t d = 0; d < 3; ++d) {
    EXPECT_EQ(m.net().head_spec(d).in, 4u + 2u);
    EXPECT_EQ(m.net().head_spec(d).out, 2u);
  }
  IgcModel b(small_config(3), dims, 0, true);
  EXPECT_EQ(b.net().head_spec(0).in, 4u + 6u);
  EXPECT_EQ(b.net().head_spec(2).in, 4u + 2u);
  auto bad = small_config(0);
  EXPECT_THROW(IgcModel(bad, dims, 0), ConfigError);
}

TEST(Generation, HorizonOneUsesOnlyTheFactualOutcome) {
  IgcModel m(small_config(1), Dims{1, 0, 1, 0}, 0);
  nn::fill_params(m.net().head_params(), std::nan(""));
  nn::fill_params(m.net().backbone_params(), std::nan(""));
  const auto tr = make_traj(0, {1.0, 2.0, 3.5}, {0, 1, 0});
  const Matrix g = generation_step(m, tr, 1, plan({1}));
  ASSERT_EQ(g.rows, 1u);
  EXPECT_EQ(g(0, 0), 3.5);
}

TEST(Generation, ZeroHeadsEmitTheirBias) {
  IgcModel m(small_config(2), Dims{1, 0, 1, 0}, 0);
  nn::fill_params(m.net().head_params(), 0.0);
  set(m.net().head_params(), "head1.l2.bias", {0.7});
  const auto tr = make_traj(0, {1.0, 2.0, 3.0, 4.0}, {0, 1, 0, 1});
  const Matrix g = generation_step(m, tr, 1, plan({1, 0}));
  EXPECT_DOUBLE_EQ(g(0, 0), 0.7);
  EXPECT_EQ(g(1, 0), 4.0);
  const Matrix c = generation_step(m, tr, 1, plan({1, 0}), 0.25);
  EXPECT_DOUBLE_EQ(c(0, 0), 0.95);
  EXPECT_EQ(c(1, 0), 4.0);
}

TEST(Generation, HandTracedForwardPass) {
  IgcConfig cfg = small_config(2);
  cfg.backbone.hidden = 1;
  cfg.backbone.repr = 1;
  cfg.head_hidden = 1;
  IgcModel m(cfg, Dims{1, 0, 1, 0}, 0);
  // LSTM input rows: y, a_prev, h; gate columns: i, f, g, o.
  const std::vector<double> W{0.5, -0.3, 0.8, 0.2, 1.0, 0.4, -0.6, 0.1, -0.2, 0.3, 0.5, 0.7};
  const std::vector<double> b{0.1, 0.2, -0.1, 0.05};
  set(m.net().backbone_params(), "lstm.W", W);
  set(m.net().backbone_params(), "lstm.b", b);
  set(m.net().backbone_params(), "lstm.out.weight", {1.5});
  set(m.net().backbone_params(), "lstm.out.bias", {-0.2});
  set(m.net().head_params(), "head1.l1.weight", {0.9, -0.4});
  set(m.net().head_params(), "head1.l1.bias", {0.1});
  set(m.net().head_params(), "head1.l2.weight", {2.0});
  set(m.net().head_params(), "head1.l2.bias", {0.3});

  const auto tr = make_traj(0, {0.4, -0.7, 1.2}, {1, 1, 0});
  const Matrix abar = plan({0, 1});

  double h = 0, c = 0;
  auto step = [&](double y, double a) {
    auto gate = [&](int k) { return W[0 * 4 + k] * y + W[1 * 4 + k] * a + W[2 * 4 + k] * h + b[k]; };
    const double i = sig(gate(0)), f = sig(gate(1)), g = std::tanh(gate(2)), o = sig(gate(3));
    c = f * c + i * g;
    h = o * std::tanh(c);
  };
  step(0.4, 0.0);  // step 0: A_{-1} = 0
  step(-0.7, 0.0);  // step 1: A_0 replaced by abar_0 = 0
  const double z1 = 1.5 * h - 0.2;
  const double expected = 2.0 * elu(0.9 * z1 - 0.4 * 1.0 + 0.1) + 0.3;  // head 1 reads abar_1 = 1

  const Matrix g = generation_step(m, tr, 0, abar);
  EXPECT_NEAR(g(0, 0), expected, 1e-14);
  EXPECT_EQ(g(1, 0), 1.2);
}

TEST(Generation, RejectsOverflowAndWrongPlans) {
  IgcModel m(small_config(2), Dims{1, 0, 1, 0}, 0);
  const auto tr = make_traj(0, {1.0, 2.0, 3.0}, {0, 1, 0});
  EXPECT_THROW(generation_step(m, tr, 1, plan({1, 0})), ContractError);
  EXPECT_THROW(generation_step(m, tr, 0, plan({1})), ContractError);
  EXPECT_THROW(generation_step(m, tr, 0, plan({1, 2})), ContractError);
}

TEST(LearningLoss, HandNumbers) {
  IgcModel m(small_config(1), Dims{1, 0, 1, 0}, 0);
  nn::fill_params(m.net().head_params(), 0.0);
  nn::fill_params(m.net().backbone_params(), 0.0);
  // pred = 1 + A_s through an ELU that is the identity on [0, 1].
  auto w1 = m.net().head_params().get("head0.l1.weight");
  w1.mutable_values()[4 * 6 + 0] = 1.0;  // treatment input -> hidden unit 0
  auto w2 = m.net().head_params().get("head0.l2.weight");
  w2.mutable_values()[0] = 1.0;
  set(m.net().head_params(), "head0.l2.bias", {1.0});
  const Dataset d = single(make_traj(0, {5.0, 0.0, 4.0}, {0, 1, 0}));
  const std::size_t idx[1] = {0};
  const HistoryBatch h = make_history_batch(d, idx, m.net().scaler());
  const PseudoOutcomes p = generation_step(m, h, plan({1}), {0.0});
  EXPECT_DOUBLE_EQ(learning_loss(m, h, d, idx, p, false, nullptr).total.item(), 2.5);
}

TEST(LearningLoss, PerfectHeadsGiveZero) {
  IgcModel m(small_config(2), Dims{1, 0, 1, 0}, 0);
  nn::fill_params(m.net().head_params(), 0.0);
  set(m.net().head_params(), "head0.l2.bias", {3.0});
  set(m.net().head_params(), "head1.l2.bias", {3.0});
  Dataset d = single(make_traj(0, {3, 3, 3, 3, 3}, {0, 1, 1, 0, 1}));
  d.items.push_back(make_traj(1, {3, 3, 3, 3}, {1, 1, 0, 0}));
  const std::size_t idx[2] = {0, 1};
  const HistoryBatch h = make_history_batch(d, idx, m.net().scaler());
  const PseudoOutcomes p = generation_step(m, h, plan({1, 1}), {0.0});
  EXPECT_EQ(learning_loss(m, h, d, idx, p, false, nullptr).total.item(), 0.0);
}

TEST(LearningLoss, MissingPseudoOutcomeIsContractError) {
  IgcModel m(small_config(2), Dims{1, 0, 1, 0}, 0);
  const Dataset d = single(make_traj(0, {1, 2, 3, 4, 5}, {0, 1, 1, 0, 1}));
  const std::size_t idx[1] = {0};
  const HistoryBatch h = make_history_batch(d, idx, m.net().scaler());
  PseudoOutcomes p = generation_step(m, h, plan({1, 0}), {0.0});
  p.cuts.pop_back();
  p.values.resize(p.values.size() - 2);
  EXPECT_THROW(learning_loss(m, h, d, idx, p, false, nullptr), ContractError);
}

TEST(LearningLoss, PaddedStepsAreExcluded) {
  IgcModel m(small_config(2), Dims{1, 0, 1, 0}, 3);
  Dataset d = single(make_traj(0, {1, 2, 3, 4, 5, 6}, {0, 1, 1, 0, 1, 0}));
  d.items.push_back(make_traj(1, {0.5, 0.1, -0.3}, {1, 0, 1}));
  const std::size_t both[2] = {0, 1};
  const HistoryBatch h = make_history_batch(d, both, m.net().scaler());
  const PseudoOutcomes p = generation_step(m, h, plan({1, 0}), {0.0});
  const double pooled = learning_loss(m, h, d, both, p, false, nullptr).total.item();
  double separate = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    const std::size_t one[1] = {i};
    const HistoryBatch hi = make_history_batch(d, one, m.net().scaler());
    const PseudoOutcomes pi = generation_step(m, hi, plan({1, 0}), {0.0});
    separate += learning_loss(m, hi, d, one, pi, false, nullptr).total.item() / 2.0;
  }
  EXPECT_NEAR(pooled, separate, 1e-12);
}

// Gradients of the learning loss treat the generated targets as constants: autodiff matches
// finite differences with targets frozen and differs from differences that regenerate them.
TEST(LearningLoss, TargetsAreDetached) {
  IgcModel m(small_config(2), Dims{1, 0, 1, 0}, 7);
  const Dataset d = single(make_traj(0, {0.3, -0.2, 0.9, 0.4, -0.5, 0.1}, {1, 0, 1, 1, 0, 1}));
  const std::size_t idx[1] = {0};
  const HistoryBatch h = make_history_batch(d, idx, m.net().scaler());
  const Matrix abar = plan({0, 1});
  const PseudoOutcomes frozen = generation_step(m, h, abar, {0.0});
  const auto loss = learning_loss(m, h, d, idx, frozen, false, nullptr).total;
  loss.backward();
  auto w = m.net().head_params().get("head1.l1.weight");
  const double grad = w.grad()[0];
  const double eps = 1e-6, orig = w[0];
  auto eval = [&](bool regenerate) {
    const PseudoOutcomes p = regenerate ? generation_step(m, h, abar, {0.0}) : frozen;
    return learning_loss(m, h, d, idx, p, false, nullptr).total.item();
  };
  w.mutable_values()[0] = orig + eps;
  const double fp = eval(false), rp = eval(true);
  w.mutable_values()[0] = orig - eps;
  const double fm = eval(false), rm = eval(true);
  w.mutable_values()[0] = orig;
  EXPECT_NEAR(grad, (fp - fm) / (2 * eps), 1e-7);
  EXPECT_GT(std::abs(grad - (rp - rm) / (2 * eps)), 1e-5);
}

TrainConfig quick_train(std::size_t tau, std::uint64_t seed) {
  TrainConfig t;
  t.epochs = 3;
  t.batch_size = 16;
  t.lr = 1e-2;
  t.seed = seed;
  t.abar = Matrix(tau, 1, 1.0);
  return t;
}


class HorizonOneReduction : public ::testing::TestWithParam<BackboneKind> {};

TEST_P(HorizonOneReduction, MatchesPlainRegressionBitForBit) {
  auto cfg = small_config(1, GetParam());
  cfg.backbone.dropout = 0.1;
  const Dataset d = linear_dataset(40, 7, 2);
  const TrainConfig tc = quick_train(1, 5);
  IgcModel m(cfg, d.dims, 11);
  const auto igc_hist = train(m, d, tc);
  SequenceModel plain(cfg.backbone, d.dims, cfg.head_hidden, {{"head0", cfg.backbone.repr + 1, 1}}, 11);
  const auto plain_hist = plain_one_step_regression(plain, d, tc);
  ASSERT_EQ(igc_hist.size(), plain_hist.size());
  for (std::size_t e = 0; e < igc_hist.size(); ++e) EXPECT_EQ(igc_hist[e], plain_hist[e]) << "epoch " << e;
  const auto a = m.net().parameters(), b = plain.parameters();
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].size(); ++i) ASSERT_EQ(a[k][i], b[k][i]);
}

INSTANTIATE_TEST_SUITE_P(Backbones, HorizonOneReduction,
                         ::testing::Values(BackboneKind::lstm, BackboneKind::transformer));

TEST(Train, BiasedAblationAtHorizonOneEqualsTrain) {
  const Dataset d = linear_dataset(30, 6, 3);
  IgcModel a(small_config(1), d.dims, 4);
  IgcModel b(small_config(1), d.dims, 4, true);
  EXPECT_EQ(train(a, d, quick_train(1, 9)), train_biased_ablation(b, d, quick_train(1, 9)));
  EXPECT_THROW(train_biased_ablation(a, d, quick_train(1, 9)), ContractError);
}

TEST(Train, DeterministicGivenSeed) {
  const Dataset d = linear_dataset(30, 6, 3);
  auto cfg = small_config(2);
  cfg.backbone.dropout = 0.2;
  IgcModel a(cfg, d.dims, 4), b(cfg, d.dims, 4);
  const auto ha = train(a, d, quick_train(2, 1)), hb = train(b, d, quick_train(2, 1));
  EXPECT_EQ(ha, hb);
  IgcModel c(cfg, d.dims, 4);
  EXPECT_NE(train(c, d, quick_train(2, 2)), ha);
}

TEST(Train, ConstantOutcomeIsLearned) {
  Dataset d;
  d.dims = Dims{1, 0, 1, 0};
  for (std::size_t i = 0; i < 64; ++i) {
    Rng r(i, "const");
    std::vector<double> a(8);
    for (auto& v : a) v = r.bernoulli(0.5) ? 1.0 : 0.0;
    d.items.push_back(make_traj(i, std::vector<double>(8, 2.5), a));
  }
  IgcModel m(small_config(2), d.dims, 0);
  TrainConfig tc = quick_train(2, 0);
  tc.epochs = 60;
  const auto hist = train(m, d, tc);
  EXPECT_LT(hist.back(), 1e-3);
  EXPECT_NEAR(predict_capo(m, d.items[3], 4, plan({0, 1}))[0], 2.5, 0.05);
}

TEST(Train, RejectsShortTrajectoriesAndBadConfigs) {
  const Dataset d = single(make_traj(0, {1, 2}, {0, 1}));
  IgcModel m(small_config(2), d.dims, 0);
  EXPECT_THROW(train(m, d, quick_train(2, 0)), ContractError);
  const Dataset ok = linear_dataset(4, 5, 0);
  TrainConfig tc = quick_train(2, 0);
  tc.corruption = -1;
  EXPECT_THROW(train(m, ok, tc), ConfigError);
  tc = quick_train(2, 0);
  tc.abar = Matrix(3, 1);
  EXPECT_THROW(train(m, ok, tc), ContractError);
}

TEST(Train, NonFiniteLossReportsEpochBatchAndHead) {
  const Dataset d = single(make_traj(0, {0.1, 0.2, 0.3, 0.4, std::nan("")}, {0, 1, 0, 1, 0}));
  IgcModel m(small_config(2), d.dims, 0);
  TrainConfig tc = quick_train(2, 0);
  tc.fit_scaler = false;
  try {
    train(m, d, tc);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.epoch(), 0u);
    EXPECT_EQ(e.batch(), 0u);
    EXPECT_EQ(e.head(), 1);
  }
}

TEST(Train, ResampledPolicyRuns) {
  const Dataset d = linear_dataset(30, 6, 3);
  IgcModel a(small_config(2), d.dims, 4), b(small_config(2), d.dims, 4);
  TrainConfig tc = quick_train(2, 1);
  const auto fixed = train(a, d, tc);
  tc.policy = SequencePolicy::resample;
  tc.abar = Matrix();
  const auto resampled = train(b, d, tc);
  EXPECT_EQ(resampled.size(), fixed.size());
  EXPECT_NE(resampled, fixed);
}

TEST(Predict, ZeroModelReturnsHeadBias) {
  IgcModel m(small_config(2), Dims{1, 0, 1, 0}, 0);
  nn::fill_params(m.net().head_params(), 0.0);
  set(m.net().head_params(), "head0.l2.bias", {-1.25});
  const auto tr = make_traj(0, {1, 2, 3, 4}, {0, 1, 0, 1});
  EXPECT_EQ(predict_capo(m, tr, 1, plan({1, 1}))[0], -1.25);
  EXPECT_THROW(predict_capo(m, tr, 1, plan({1})), ContractError);
  EXPECT_THROW(predict_capo(m, tr, 1, plan({1, 1, 0})), ContractError);
}

TEST(Predict, OnlyTheFirstTreatmentIsConsumed) {
  IgcModel m(small_config(3), Dims{1, 0, 1, 0}, 5);
  const auto tr = make_traj(0, {1, 2, 3, 4, 5}, {0, 1, 0, 1, 1});
  EXPECT_EQ(predict_capo(m, tr, 2, plan({1, 0, 0}))[0], predict_capo(m, tr, 2, plan({1, 1, 1}))[0]);
  EXPECT_NE(predict_capo(m, tr, 2, plan({0, 0, 0}))[0], predict_capo(m, tr, 2, plan({1, 0, 0}))[0]);
}

TEST(Predict, BatchedEqualsSingle) {
  const Dataset d = linear_dataset(10, 8, 1);
  IgcModel m(small_config(2), d.dims, 5);
  std::vector<CapoQuery> qs;
  for (std::size_t i = 0; i < 10; ++i) {
    CapoQuery q;
    q.trajectory_id = i;
    q.t = i % 6;
    q.a_seq = plan({static_cast<double>(i % 2), 1});
    qs.push_back(q);
  }
  const auto batched = predict_capo(m, d, qs);
  for (std::size_t i = 0; i < qs.size(); ++i)
    EXPECT_NEAR(batched[i][0], predict_capo(m, d.items[i], qs[i].t, qs[i].a_seq)[0], 1e-13);
}

TEST(Predict, FactualContinuationOnDeterministicRecursion) {
  const Dataset d = linear_dataset(400, 10, 8);
  IgcModel m(small_config(2), d.dims, 1);
  TrainConfig tc = quick_train(2, 3);
  tc.epochs = 40;
  tc.batch_size = 32;
  tc.abar = plan({1, 0});
  train(m, d, tc);
  const Dataset test = linear_dataset(50, 10, 99);
  double sq = 0.0;
  std::size_t n = 0;
  for (const auto& tr : test.items)
    for (std::size_t t = 1; t + 2 < tr.length(); ++t) {
      if (tr.A(t, 0) != 1.0 || tr.A(t + 1, 0) != 0.0) continue;
      const double e = predict_capo(m, tr, t, tc.abar)[0] - tr.Y(t + 2, 0);
      sq += e * e;
      ++n;
    }
  ASSERT_GT(n, 20u);
  EXPECT_LT(std::sqrt(sq / static_cast<double>(n)), 0.1);
}

TEST(Uncertainty, NoDropoutIsDegenerate) {
  IgcModel m(small_config(2), Dims{1, 0, 1, 0}, 2);
  const auto tr = make_traj(0, {1, 2, 3, 4}, {0, 1, 0, 1});
  const auto u = predict_with_uncertainty(m, tr, 1, plan({1, 0}), 50, {0.1, 0.9}, 3);
  EXPECT_EQ(u.std[0], 0.0);
  EXPECT_NEAR(u.mean[0], predict_capo(m, tr, 1, plan({1, 0}))[0], 1e-14);
  EXPECT_EQ(u.warnings.size(), 1u);
  EXPECT_THROW(predict_with_uncertainty(m, tr, 1, plan({1, 0}), 1, {}, 3), ContractError);
}

TEST(Uncertainty, MeanStableAcrossReruns) {
  auto cfg = small_config(2);
  cfg.backbone.dropout = 0.3;
  IgcModel m(cfg, Dims{1, 0, 1, 0}, 2);
  const auto tr = make_traj(0, {1, 2, 3, 4, 3, 2}, {0, 1, 0, 1, 1, 0});
  const std::size_t K = 10000;
  const auto a = predict_with_uncertainty(m, tr, 3, plan({1, 0}), K, {0.05, 0.5, 0.95}, 1);
  const auto b = predict_with_uncertainty(m, tr, 3, plan({1, 0}), K, {0.05, 0.5, 0.95}, 2);
  EXPECT_GT(a.std[0], 0.0);
  // Two independent means differ by sqrt(2) std/sqrt(K) in standard deviation.
  EXPECT_LT(std::abs(a.mean[0] - b.mean[0]), 3.0 * std::sqrt(2.0) * a.std[0] / std::sqrt(static_cast<double>(K)));
  EXPECT_LE(a.quantiles[0][0], a.quantiles[1][0]);
  EXPECT_LE(a.quantiles[1][0], a.quantiles[2][0]);
  const auto again = predict_with_uncertainty(m, tr, 3, plan({1, 0}), K, {0.5}, 1);
  EXPECT_EQ(again.mean, a.mean);
}

TEST(Uncertainty, SpreadGrowsWithDropoutRate) {
  const Dataset d = linear_dataset(6, 8, 4);
  double prev = -1.0;
  for (double p : {0.1, 0.3, 0.5}) {
    auto cfg = small_config(2);
    cfg.backbone.dropout = p;
    IgcModel m(cfg, d.dims, 2);
    double avg = 0.0;
    for (const auto& tr : d.items) avg += predict_with_uncertainty(m, tr, 4, plan({1, 0}), 2000, {}, 5).std[0];
    EXPECT_GE(avg, prev) << "p=" << p;
    prev = avg;
  }
}

TEST(Uncertainty, QuantileInterpolates) {
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_THROW(quantile({}, 0.5), ContractError);
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  for (bool biased : {false, true}) {
    const Dataset d = linear_dataset(20, 6, 3);
    IgcModel m(small_config(2, BackboneKind::transformer), d.dims, 4, biased);
    train(m, d, quick_train(2, 1));
    const auto text = save_checkpoint(m, {{"seed", 1}}).dump();
    const IgcModel back = load_igc_checkpoint(nlohmann::json::parse(text));
    EXPECT_EQ(back.kind(), m.kind());
    EXPECT_EQ(back.net().scaler(), m.net().scaler());
    for (const auto& tr : d.items)
      EXPECT_EQ(predict_capo(back, tr, 2, plan({1, 0}))[0], predict_capo(m, tr, 2, plan({1, 0}))[0]);
  }
}

TEST(Checkpoint, ShapeMismatchAndWrongKindRejected) {
  IgcModel m(small_config(2), Dims{1, 0, 1, 0}, 0);
  auto j = save_checkpoint(m);
  auto bad = j;
  bad["tensors"]["head0.l1.bias"]["shape"] = {7};
  EXPECT_THROW(load_igc_checkpoint(bad), ConfigError);
  bad = j;
  bad["tensors"].erase("head1.l2.weight");
  EXPECT_THROW(load_igc_checkpoint(bad), ConfigError);
  bad = j;
  bad["kind"] = "ipw";
  EXPECT_THROW(load_igc_checkpoint(bad), ConfigError);
  bad = j;
  bad["version"] = 2;
  EXPECT_THROW(load_igc_checkpoint(bad), ConfigError);
}

// Modest-size version of the oracle consistency check; the full-size run lives in the acceptance binary.
TEST(OracleConsistency, DiscreteScmApproachesGFormula) {
  const scm::DiscreteScm fixture;
  const Dataset d = scm::simulate_dataset(fixture, 4000, 1);
  auto cfg = small_config(2);
  IgcModel m(cfg, d.dims, 1);
  TrainConfig tc = quick_train(2, 1);
  tc.epochs = 15;
  tc.batch_size = 64;
  tc.abar = plan({1, 0});
  train(m, d, tc);
  const Dataset test = scm::simulate_dataset(fixture, 100, 2);
  double err = 0.0;
  for (const auto& tr : test.items) {
    const double truth = scm::exact_values(fixture, tr, 2, tc.abar).gformula;
    err += std::abs(predict_capo(m, tr, 2, tc.abar)[0] - truth);
  }
  EXPECT_LT(err / 100.0, 0.05);
}

}  // namespace
