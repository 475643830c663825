#include <gtest/gtest.h>

#include <cmath>

#include "igc/datagen/discrete_scm.hpp"
#include "igc/datagen/tumor.hpp"
#include "igc/estimators/estimator.hpp"

namespace {

using namespace igc;

Matrix plan(std::initializer_list<double> v) {
  Matrix m(v.size(), 1);
  std::size_t i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

BackboneConfig small_backbone() {
  BackboneConfig c;
  c.hidden = 8;
  c.repr = 4;
  return c;
}

TrainConfig quick_train(std::size_t epochs, std::uint64_t seed) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 64;
  tc.lr = 1e-2;
  tc.seed = seed;
  return tc;
}

// Y_{t+1} = 0.5 Y_t + A_t + noise_sd * eps, with A_t ~ Ber(p_treat) independent of the past.
Dataset linear_dataset(std::size_t N, std::size_t T, std::uint64_t seed, double noise_sd = 0.0, double p_treat = 0.5) {
  Dataset d;
  d.dims = Dims{1, 0, 1, 0};
  for (std::size_t i = 0; i < N; ++i) {
    Rng r = Rng(seed, "linear").fork(i);
    Trajectory tr;
    tr.id = i;
    tr.Y = Matrix(T, 1);
    tr.X = Matrix(T, 0);
    tr.A = Matrix(T, 1);
    tr.true_propensities = Matrix(T, 1, p_treat);
    tr.Y(0, 0) = r.normal();
    for (std::size_t t = 0; t < T; ++t) {
      tr.A(t, 0) = r.bernoulli(p_treat) ? 1.0 : 0.0;
      if (t + 1 < T) tr.Y(t + 1, 0) = 0.5 * tr.Y(t, 0) + tr.A(t, 0) + noise_sd * r.normal();
    }
    d.items.push_back(std::move(tr));
  }
  return d;
}

// Noise-free CAPO of the linear recursion: Y_{t+2}[a0, a1] = 0.25 Y_t + 0.5 a0 + a1.
double linear_truth(const Trajectory& tr, std::size_t t, const Matrix& abar) {
  double y = tr.Y(t, 0);
  for (std::size_t k = 0; k < abar.rows; ++k) y = 0.5 * y + abar(k, 0);
  return y;
}

std::vector<CapoQuery> queries_at(const Dataset& d, std::size_t t, const Matrix& abar, std::size_t n) {
  std::vector<CapoQuery> qs;
  for (std::size_t i = 0; i < n; ++i) {
    CapoQuery q;
    q.trajectory_id = d.items[i].id;
    q.t = t;
    q.a_seq = abar;
    qs.push_back(q);
  }
  return qs;
}

// ---------- propensity ----------

TEST(Propensity, CoinFlipTreatmentsGiveOneHalf) {
  const Dataset d = linear_dataset(5000, 8, 1);
  PropensityModel m(small_backbone(), d.dims, 8, 0.01, 1);
  TrainConfig tc = quick_train(4, 1);
  tc.batch_size = 128;
  tc.lr = 3e-3;
  const PropensityFit fit = fit_propensity(m, d, tc);
  EXPECT_TRUE(fit.warnings.empty());
  const Dataset test = linear_dataset(200, 8, 2);
  double worst = 0.0, mean = 0.0, n = 0.0;
  for (const Matrix& p : predict_propensities(m, test))
    for (double v : p.data) {
      worst = std::max(worst, std::abs(v - 0.5));
      mean += v;
      n += 1;
    }
  EXPECT_NEAR(mean / n, 0.5, 0.02);
  EXPECT_LT(worst, 0.02);
}

double mean_distance_from_half(const std::vector<Matrix>& ps) {
  double s = 0.0, n = 0.0;
  for (const Matrix& p : ps)
    for (double v : p.data) {
      s += std::abs(v - 0.5);
      n += 1;
    }
  return s / n;
}

TEST(Propensity, StrongerOverlapScalingPushesMassToTheBounds) {
  auto fitted_spread = [](double rho_ov) {
    tumor::TumorParams p;
    p.gamma = 10.0;
    p.rho_ov = rho_ov;
    const Dataset d = tumor::simulate_tumor_dataset(p, 400, 3);
    PropensityModel m(small_backbone(), d.dims, 8, 0.01, 3);
    fit_propensity(m, d, quick_train(8, 3));
    return mean_distance_from_half(predict_propensities(m, d));
  };
  EXPECT_GT(fitted_spread(1.5), fitted_spread(0.5));
}

TEST(Propensity, SeparableTreatmentsAreClippedAndFinite) {
  Dataset d = linear_dataset(400, 8, 4);
  for (auto& tr : d.items)
    for (std::size_t t = 0; t < tr.length(); ++t) tr.A(t, 0) = tr.Y(t, 0) > 0.5 ? 1.0 : 0.0;
  PropensityModel m(small_backbone(), d.dims, 8, 0.01, 4);
  TrainConfig tc = quick_train(60, 4);
  tc.lr = 3e-2;
  fit_propensity(m, d, tc);
  double lo = 1.0, hi = 0.0;
  for (const Matrix& p : predict_propensities(m, d))
    for (double v : p.data) {
      ASSERT_TRUE(std::isfinite(v));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  EXPECT_GE(lo, 0.01);
  EXPECT_LE(hi, 0.99);
  EXPECT_DOUBLE_EQ(lo, 0.01);
  EXPECT_DOUBLE_EQ(hi, 0.99);
  const auto w = ipw_weights(d, predict_propensities(m, d), plan({1, 1}), false);
  for (const auto& row : w)
    for (double v : row) {
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_LE(v, 1.0 / (0.01 * 0.01));
    }
}

TEST(Propensity, SingleClassWarns) {
  Dataset d = linear_dataset(50, 5, 5);
  for (auto& tr : d.items) std::fill(tr.A.data.begin(), tr.A.data.end(), 0.0);
  PropensityModel m(small_backbone(), d.dims, 8, 0.01, 5);
  const PropensityFit fit = fit_propensity(m, d, quick_train(1, 5));
  ASSERT_EQ(fit.warnings.size(), 1u);
  EXPECT_NE(fit.warnings[0].find("single observed class"), std::string::npos);
}

TEST(Propensity, InvalidClipRejected) {
  const Dims dims{1, 0, 1, 0};
  EXPECT_THROW(PropensityModel(small_backbone(), dims, 8, 0.0, 1), ConfigError);
  EXPECT_THROW(PropensityModel(small_backbone(), dims, 8, 0.5, 1), ConfigError);
}

TEST(Propensity, CalibrationBinsCoverAllSteps) {
  const Dataset d = linear_dataset(100, 6, 6);
  PropensityModel m(small_backbone(), d.dims, 8, 0.01, 6);
  fit_propensity(m, d, quick_train(2, 6));
  const auto bins = calibration(m, d);
  ASSERT_EQ(bins.size(), 10u);
  std::size_t total = 0;
  for (const auto& b : bins) {
    total += b.count;
    EXPECT_NEAR(b.hi - b.lo, 0.1, 1e-12);
    if (b.count) {
      EXPECT_GE(b.mean_predicted, b.lo);
      EXPECT_LE(b.mean_predicted, b.hi);
    }
  }
  EXPECT_EQ(total, 600u);
}

// ---------- IPW ----------

TEST(Ipw, HalfPropensityHorizonTwoWeightIsFour) {
  Dataset d = linear_dataset(3, 4, 7);
  d.items[0].A.data = {1, 1, 0, 1};
  std::vector<Matrix> p(d.size(), Matrix(4, 1, 0.5));
  const auto w = ipw_weights(d, p, plan({1, 1}), false);
  ASSERT_EQ(w[0].size(), 2u);
  EXPECT_DOUBLE_EQ(w[0][0], 4.0);  // A_0 A_1 = (1, 1)
  EXPECT_DOUBLE_EQ(w[0][1], 0.0);  // A_1 A_2 = (1, 0)
}

TEST(Ipw, StabilizedWeightsUseMarginalFrequencies) {
  Dataset d = linear_dataset(4, 3, 8);
  d.items[0].A.data = {1, 1, 0};
  d.items[1].A.data = {1, 0, 0};
  d.items[2].A.data = {0, 1, 1};
  d.items[3].A.data = {1, 1, 1};
  std::vector<Matrix> p(d.size(), Matrix(3, 1, 0.5));
  const Matrix abar = plan({1, 1});
  const Matrix f = marginal_plan_frequencies(d, abar);
  EXPECT_DOUBLE_EQ(f(0, 0), 0.75);
  EXPECT_DOUBLE_EQ(f(1, 1), 0.75);
  const auto w = ipw_weights(d, p, abar, true);
  EXPECT_DOUBLE_EQ(w[0][0], 0.75 / 0.5 * 0.75 / 0.5);
  EXPECT_DOUBLE_EQ(w[3][0], 0.75 / 0.5 * 0.75 / 0.5);
  EXPECT_DOUBLE_EQ(w[1][0], 0.0);
}

TEST(Ipw, HonestSplitIsDisjointAndCovering) {
  const auto [a, b] = honest_split(101, 0.5, 9);
  EXPECT_EQ(a.size() + b.size(), 101u);
  std::vector<int> seen(101, 0);
  for (auto i : a) ++seen[i];
  for (auto i : b) ++seen[i];
  for (int s : seen) EXPECT_EQ(s, 1);
  EXPECT_THROW(honest_split(1, 0.5, 9), ContractError);
}

TEST(Ipw, BatchesWithoutMatchesAreSkippedAndCounted) {
  Dataset d = linear_dataset(40, 5, 10);
  for (auto& tr : d.items) std::fill(tr.A.data.begin(), tr.A.data.end(), 0.0);
  IpwModel m(small_backbone(), d.dims, 1, 8, IpwConfig{}, 10);
  std::vector<Matrix> p(d.size(), Matrix(5, 1, 0.5));
  TrainConfig tc = quick_train(2, 10);
  tc.batch_size = 16;
  tc.abar = plan({1});
  const auto hist = ipw_regress(m, d, p, tc);
  EXPECT_EQ(m.skipped_batches, 6u);
  for (double h : hist) EXPECT_TRUE(std::isnan(h));
}

TEST(Ipw, HorizonOneAgreesWithIgc) {
  const Dataset d = linear_dataset(3000, 8, 11, 0.1);
  const Dataset test = linear_dataset(100, 8, 12);
  const Matrix abar = plan({1});
  const auto qs = queries_at(test, 3, abar, 100);

  EstimatorSpec s;
  s.backbone = small_backbone();
  s.tau = 1;
  s.head_hidden = 8;
  s.train = quick_train(10, 11);
  s.train.abar = abar;
  s.kind = EstimatorKind::ipw;
  const auto ipw = fit_estimator(s, d);
  s.kind = EstimatorKind::igc;
  const auto igc = fit_estimator(s, d);
  const auto pi = ipw->predict(test, qs), pg = igc->predict(test, qs);
  double diff = 0.0, err = 0.0;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    diff += std::abs(pi[i][0] - pg[i][0]);
    err += std::abs(pg[i][0] - linear_truth(test.items[i], 3, abar));
  }
  EXPECT_LT(err / 100.0, 0.1);
  EXPECT_LT(diff / 100.0, 0.1);
}

TEST(Ipw, PredictionRejectsOtherPlans) {
  const Dataset d = linear_dataset(60, 5, 13);
  IpwModel m(small_backbone(), d.dims, 1, 8, IpwConfig{}, 13);
  TrainConfig tc = quick_train(1, 13);
  tc.abar = plan({1});
  train_ipw(m, d, tc);
  EXPECT_THROW(predict_capo(m, d, queries_at(d, 1, plan({0}), 2)), ContractError);
  EXPECT_NO_THROW(predict_capo(m, d, queries_at(d, 1, plan({1}), 2)));
}

TEST(Ipw, StabilizationDefaultsOnForLongerHorizons) {
  const Dims dims{1, 0, 1, 0};
  EXPECT_FALSE(IpwModel(small_backbone(), dims, 1, 8, IpwConfig{}, 1).stabilized());
  EXPECT_TRUE(IpwModel(small_backbone(), dims, 2, 8, IpwConfig{}, 1).stabilized());
  IpwConfig off;
  off.stabilized = false;
  EXPECT_FALSE(IpwModel(small_backbone(), dims, 2, 8, off, 1).stabilized());
}

// ---------- Monte-Carlo g-computation ----------

TEST(Gcomp, FewerThanOneRolloutIsContractError) {
  const Dataset d = linear_dataset(10, 5, 14);
  GcompModel m(small_backbone(), d.dims, 2, 8, 14);
  GcompConfig g;
  g.samples = 0;
  EXPECT_THROW(gcomp_rollout(m, d, queries_at(d, 1, plan({1, 0}), 2), g), ContractError);
}

TEST(Gcomp, DeterministicRolloutOnNoiseFreeRecursion) {
  const Dataset d = linear_dataset(2000, 8, 15);
  GcompModel m(small_backbone(), d.dims, 2, 8, 15);
  train_gcomp(m, d, quick_train(15, 15));
  const Dataset test = linear_dataset(100, 8, 16);
  GcompConfig g;
  g.samples = 1;
  g.deterministic = true;
  for (const Matrix& abar : {plan({1, 0}), plan({0, 1})}) {
    const auto pred = predict_capo(m, test, queries_at(test, 3, abar, 100), g);
    double err = 0.0;
    for (std::size_t i = 0; i < 100; ++i) err += std::abs(pred[i][0] - linear_truth(test.items[i], 3, abar));
    EXPECT_LT(err / 100.0, 0.1);
  }
}

TEST(Gcomp, DeterministicRolloutHasNoSpread) {
  const Dataset d = linear_dataset(30, 6, 17, 0.5);
  GcompModel m(small_backbone(), d.dims, 3, 8, 17);
  GcompConfig g;
  g.samples = 7;
  g.deterministic = true;
  const auto est = gcomp_rollout(m, d, queries_at(d, 1, plan({1, 0, 1}), 3), g);
  for (const auto& sd : est.sd) EXPECT_EQ(sd[0], 0.0);
}

TEST(Gcomp, MonteCarloErrorShrinksLikeInverseRootK) {
  const Dataset d = linear_dataset(1000, 6, 18, 0.5);
  GcompModel m(small_backbone(), d.dims, 2, 8, 18);
  train_gcomp(m, d, quick_train(5, 18));
  const auto qs = queries_at(d, 2, plan({1, 1}), 1);
  auto spread = [&](std::size_t K) {
    std::vector<double> v;
    for (std::uint64_t s = 0; s < 20; ++s) {
      GcompConfig g;
      g.samples = K;
      g.seed = s;
      v.push_back(gcomp_rollout(m, d, qs, g).mean[0][0]);
    }
    double mu = 0.0;
    for (double x : v) mu += x / 20.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / 19.0);
  };
  const double ratio = spread(1) / spread(10000);
  EXPECT_GT(ratio, 100.0 / 2.0);
  EXPECT_LT(ratio, 100.0 * 2.0);
}

TEST(Gcomp, DiscreteScmApproachesGFormula) {
  const scm::DiscreteScm fixture;
  const Dataset d = scm::simulate_dataset(fixture, 4000, 19);
  GcompModel m(small_backbone(), d.dims, 2, 8, 19);
  train_gcomp(m, d, quick_train(15, 19));
  const Dataset test = scm::simulate_dataset(fixture, 60, 20);
  const Matrix abar = plan({1, 0});
  GcompConfig g;
  g.samples = 400;
  const auto pred = predict_capo(m, test, queries_at(test, 2, abar, 60), g);
  double err = 0.0;
  for (std::size_t i = 0; i < 60; ++i) err += std::abs(pred[i][0] - scm::exact_values(fixture, test.items[i], 2, abar).gformula);
  EXPECT_LT(err / 60.0, 0.05);
}

// ---------- history regressor ----------

TEST(History, HorizonOneMatchesIgcEstimand) {
  const Dataset d = linear_dataset(2000, 8, 21);
  const Dataset test = linear_dataset(100, 8, 22);
  const Matrix abar = plan({0});
  const auto qs = queries_at(test, 3, abar, 100);
  EstimatorSpec s;
  s.backbone = small_backbone();
  s.tau = 1;
  s.head_hidden = 8;
  s.train = quick_train(10, 21);
  s.train.abar = abar;
  s.kind = EstimatorKind::history;
  const auto hist = fit_estimator(s, d)->predict(test, qs);
  s.kind = EstimatorKind::igc;
  const auto igc = fit_estimator(s, d)->predict(test, qs);
  double diff = 0.0;
  for (std::size_t i = 0; i < 100; ++i) diff += std::abs(hist[i][0] - igc[i][0]);
  EXPECT_LT(diff / 100.0, 0.1);
}

TEST(History, ConsumesTheWholePlan) {
  const Dataset d = linear_dataset(2000, 8, 23);
  HistoryRegressor m(small_backbone(), d.dims, 2, 8, 23);
  train_history_regressor(m, d, quick_train(10, 23));
  const Dataset test = linear_dataset(100, 8, 24);
  for (const Matrix& abar : {plan({1, 0}), plan({0, 1}), plan({1, 1})}) {
    const auto pred = predict_capo(m, test, queries_at(test, 3, abar, 100));
    double err = 0.0;
    for (std::size_t i = 0; i < 100; ++i) err += std::abs(pred[i][0] - linear_truth(test.items[i], 3, abar));
    EXPECT_LT(err / 100.0, 0.1);
  }
}

// ---------- estimator wrapper ----------

class EstimatorRoundTrip : public ::testing::TestWithParam<EstimatorKind> {};

TEST_P(EstimatorRoundTrip, CheckpointPreservesPredictions) {
  const Dataset d = linear_dataset(120, 6, 25, 0.3);
  EstimatorSpec s;
  s.kind = GetParam();
  s.backbone = small_backbone();
  s.tau = 2;
  s.head_hidden = 6;
  s.train = quick_train(2, 25);
  s.train.abar = plan({1, 0});
  s.gcomp.samples = 16;
  s.gcomp.seed = 3;
  const auto est = fit_estimator(s, d);
  EXPECT_EQ(est->kind(), s.kind);
  const auto qs = queries_at(d, 2, s.train.abar, 20);
  const auto before = est->predict(d, qs);
  const nlohmann::json j = nlohmann::json::parse(est->checkpoint({{"note", "x"}}).dump());
  const auto loaded = load_estimator(j);
  EXPECT_EQ(loaded->kind(), s.kind);
  EXPECT_EQ(loaded->tau(), 2u);
  const auto after = loaded->predict(d, qs);
  ASSERT_EQ(after.size(), before.size());
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(after[i][0], before[i][0], 1e-12);
}

INSTANTIATE_TEST_SUITE_P(AllKinds, EstimatorRoundTrip,
                         ::testing::Values(EstimatorKind::igc, EstimatorKind::igc_biased, EstimatorKind::history,
                                           EstimatorKind::ipw, EstimatorKind::gcomp),
                         [](const auto& info) { return to_string(info.param); });

TEST(Estimator, KindNamesRoundTrip) {
  for (auto k : {EstimatorKind::igc, EstimatorKind::igc_biased, EstimatorKind::history, EstimatorKind::ipw,
                 EstimatorKind::gcomp})
    EXPECT_EQ(estimator_kind_from_string(to_string(k)), k);
  EXPECT_THROW(estimator_kind_from_string("crn"), ConfigError);
}

TEST(Estimator, CheckpointKindMismatchRejected) {
  const Dataset d = linear_dataset(20, 5, 26);
  EstimatorSpec s;
  s.kind = EstimatorKind::history;
  s.backbone = small_backbone();
  s.tau = 1;
  s.train = quick_train(1, 26);
  auto j = fit_estimator(s, d)->checkpoint(nlohmann::json::object());
  j["kind"] = "gcomp";
  EXPECT_THROW(load_estimator(j), std::exception);
  j["kind"] = "nope";
  EXPECT_THROW(load_estimator(j), ConfigError);
}

}  // namespace
