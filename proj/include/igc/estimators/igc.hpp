#pragma once

#include <algorithm>
#include <cmath>
#include <map>

#include "igc/estimators/model.hpp"

namespace igc {

struct IgcConfig {
  BackboneConfig backbone;
  std::size_t tau = 2;
  std::size_t head_hidden = 16;
};

enum class SequencePolicy { fixed, resample };

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 5e-3;
  double clip_norm = 1.0;  // <= 0 disables clipping
  SequencePolicy policy = SequencePolicy::fixed;
  Matrix abar;              // tau x d_a, used by the fixed policy
  double corruption = 0.0;  // constant bias added to generated pseudo-outcomes, in outcome units
  std::uint64_t seed = 0;
  bool fit_scaler = true;
};

/// IGC network: backbone z and tau heads g_0..g_{tau-1}. Head delta reads (Z_s, A_s). In the
/// biased ablation head delta instead reads the remaining plan A_s..A_{s+tau-1-delta}.
class IgcModel {
 public:
  IgcModel(const IgcConfig& cfg, const Dims& dims, std::uint64_t seed, bool biased = false)
      : cfg_(cfg), biased_(biased), net_(cfg.backbone, dims, cfg.head_hidden, head_specs(cfg, dims, biased), seed) {}

  std::size_t tau() const { return cfg_.tau; }
  bool biased() const { return biased_; }
  const IgcConfig& config() const { return cfg_; }
  const Dims& dims() const { return net_.dims(); }
  SequenceModel& net() { return net_; }
  const SequenceModel& net() const { return net_; }
  std::string kind() const { return biased_ ? "igc_biased" : "igc"; }

  /// Treatment steps consumed by head delta.
  std::size_t plan_length(std::size_t delta) const { return biased_ ? cfg_.tau - delta : 1; }

 private:
  static std::vector<HeadSpec> head_specs(const IgcConfig& cfg, const Dims& dims, bool biased) {
    if (cfg.tau < 1) throw ConfigError("tau", "horizon must be >= 1");
    std::vector<HeadSpec> specs;
    for (std::size_t d = 0; d < cfg.tau; ++d) {
      const std::size_t plan = biased ? cfg.tau - d : 1;
      specs.push_back({"head" + std::to_string(d), cfg.backbone.repr + plan * dims.a, dims.y});
    }
    return specs;
  }

  IgcConfig cfg_;
  bool biased_;
  SequenceModel net_;
};

/// Cuts t = 0..T_b-1-tau of every batch row (those with a factual outcome at t + tau).
inline std::vector<BranchCut> valid_cuts(const HistoryBatch& h, std::size_t tau) {
  std::vector<BranchCut> cuts;
  for (std::size_t b = 0; b < h.B; ++b)
    for (std::size_t t = 0; t + tau < h.lengths[b]; ++t) cuts.push_back({b, t});
  return cuts;
}

/// Pseudo-outcomes per cut, standardized. Slot k holds G_{t+k+1}; slot tau-1 is the factual Y_{t+tau}.
struct PseudoOutcomes {
  std::size_t tau = 0, dy = 0;
  std::vector<BranchCut> cuts;
  std::vector<double> values;  // (R, tau, dy)

  double at(std::size_t r, std::size_t k, std::size_t j) const { return values[(r * tau + k) * dy + j]; }
};

/// Generation step: with the treatments from each cut onward replaced by abar, heads 1..tau-1
/// produce G_{t+1..t+tau-1} without dropout or graph. `bias` (standardized, per outcome
/// dimension) is added to generated entries only.
inline PseudoOutcomes generation_step(const IgcModel& m, const HistoryBatch& h, const Matrix& abar,
                                      const std::vector<double>& bias) {
  if (m.biased()) throw ContractError("the biased ablation has no generation step");
  const std::size_t tau = m.tau(), dy = h.dy, da = h.da;
  check_intervention(abar, tau, da);
  if (bias.size() != dy) throw DimensionError("corruption bias must have one entry per outcome dimension");
  ad::NoGradGuard ng;
  PseudoOutcomes p;
  p.tau = tau;
  p.dy = dy;
  p.cuts = valid_cuts(h, tau);
  const std::size_t R = p.cuts.size();
  p.values.assign(R * tau * dy, 0.0);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < dy; ++j)
      p.values[(r * tau + tau - 1) * dy + j] = h.y[h.at(p.cuts[r].row, p.cuts[r].t + tau, j, dy)];
  if (tau == 1 || R == 0) return p;

  const std::size_t dz = m.net().backbone().repr_dim();
  const ad::Tensor zbar = m.net().backbone().encode_branches(h, p.cuts, abar, tau - 1);
  for (std::size_t d = 1; d < tau; ++d) {
    const ad::Tensor z = ad::reshape(ad::slice(zbar, 1, d - 1, d), {R, dz});
    std::vector<double> a(R * da);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < da; ++c) a[r * da + c] = abar(d, c);
    const ad::Tensor g = m.net().head(d, ad::concat({z, ad::Tensor::constant({R, da}, std::move(a))}, 1));
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t j = 0; j < dy; ++j) p.values[(r * tau + d - 1) * dy + j] = g[r * dy + j] + bias[j];
  }
  return p;
}

/// Pseudo-outcomes of one cut in outcome units: row k is G_{t+k+1}.
inline Matrix generation_step(const IgcModel& m, const Trajectory& tr, std::size_t t, const Matrix& abar,
                              double corruption_bias = 0.0) {
  if (t + m.tau() >= tr.length()) throw ContractError("generation_step: t + tau beyond the trajectory");
  Dataset one;
  one.dims = m.dims();
  one.items.push_back(tr);
  const std::size_t idx[1] = {0};
  const std::size_t len[1] = {t + m.tau() + 1};
  const HistoryBatch h = make_history_batch(one, idx, m.net().scaler(), len);
  std::vector<double> bias(m.dims().y);
  for (std::size_t j = 0; j < bias.size(); ++j) bias[j] = corruption_bias / m.net().scaler().y.sd[j];
  const PseudoOutcomes p = generation_step(m, h, abar, bias);
  std::size_t r = 0;
  while (p.cuts[r].t != t) ++r;
  Matrix out(m.tau(), m.dims().y);
  for (std::size_t k = 0; k < m.tau(); ++k)
    for (std::size_t j = 0; j < out.cols; ++j) out(k, j) = m.net().scaler().y.inverse(p.at(r, k, j), j);
  return out;
}

struct LossTerms {
  ad::Tensor total;
  std::vector<ad::Tensor> heads;
};

/// Pooled squared error of every head over every valid cut. Each trajectory contributes
/// (1/(T_b - tau)) sum_t (1/tau) sum_delta mean_j (g_delta - target)^2 and the batch is averaged.
/// `targets(b, t, delta, j)` supplies the regression target of head delta at cut t.
template <class TargetFn>
LossTerms pooled_head_loss(const IgcModel& m, const HistoryBatch& h, const Dataset& d, std::span<const std::size_t> idx,
                           bool training, Rng* rng, TargetFn targets) {
  const std::size_t tau = m.tau(), dy = h.dy, B = h.B, T = h.T;
  const ad::Tensor z = m.net().backbone().encode(h, training, rng);
  LossTerms out;
  std::map<std::size_t, ad::Tensor> plans;
  for (std::size_t delta = 0; delta < tau; ++delta) {
    const std::size_t k = m.plan_length(delta);
    if (!plans.count(k))
      plans[k] = ad::Tensor::constant({B, T, k * h.da}, treatment_windows(d, idx, T, k));
    const ad::Tensor pred = m.net().head(delta, ad::concat({z, plans[k]}, 2));
    std::vector<double> target(B * T * dy, 0.0), w(B * T * dy, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      if (h.lengths[b] <= tau) continue;
      const double wb = 1.0 / (static_cast<double>(B) * static_cast<double>(h.lengths[b] - tau) *
                               static_cast<double>(tau) * static_cast<double>(dy));
      for (std::size_t t = 0; t + tau < h.lengths[b]; ++t)
        for (std::size_t j = 0; j < dy; ++j) {
          const std::size_t i = (b * T + t + delta) * dy + j;
          target[i] = targets(b, t, delta, j);
          w[i] = wb;
        }
    }
    out.heads.push_back(ad::weighted_sse(pred, ad::Tensor::constant({B, T, dy}, std::move(target)), std::move(w)));
    out.total = delta == 0 ? out.heads.back() : ad::add(out.total, out.heads.back());
  }
  return out;
}

/// Learning step: heads on factual encodings regress the detached pseudo-outcomes.
inline LossTerms learning_loss(const IgcModel& m, const HistoryBatch& h, const Dataset& d,
                               std::span<const std::size_t> idx, const PseudoOutcomes& p, bool training, Rng* rng) {
  if (p.tau != m.tau()) throw ContractError("pseudo-outcomes were generated for a different horizon");
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> row_of;
  for (std::size_t r = 0; r < p.cuts.size(); ++r) row_of[{p.cuts[r].row, p.cuts[r].t}] = r;
  for (const auto& c : valid_cuts(h, m.tau()))
    if (!row_of.count({c.row, c.t}))
      throw ContractError("missing pseudo-outcome for batch row " + std::to_string(c.row) + ", t=" + std::to_string(c.t));
  return pooled_head_loss(m, h, d, idx, training, rng, [&](std::size_t b, std::size_t t, std::size_t delta, std::size_t j) {
    return p.at(row_of.at({b, t}), delta, j);
  });
}

/// Biased ablation: every head regresses the factual Y_{t+tau}.
inline LossTerms biased_loss(const IgcModel& m, const HistoryBatch& h, const Dataset& d,
                             std::span<const std::size_t> idx, bool training, Rng* rng) {
  const std::size_t tau = m.tau();
  return pooled_head_loss(m, h, d, idx, training, rng, [&](std::size_t b, std::size_t t, std::size_t, std::size_t j) {
    return h.y[h.at(b, t + tau, j, h.dy)];
  });
}

inline Matrix random_intervention(std::size_t tau, std::size_t da, Rng& rng) {
  Matrix a(tau, da);
  for (double& v : a.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  return a;
}

inline void check_training_data(const Dataset& d, std::size_t tau) {
  if (d.size() == 0) throw ContractError("training dataset is empty");
  d.validate();
  for (const auto& tr : d.items)
    if (tr.length() < tau + 1)
      throw ContractError("trajectory " + std::to_string(tr.id) + " is shorter than tau + 1 steps");
}

/// Streams of one training run: minibatch order and dropout masks per (epoch, batch).
struct TrainStreams {
  Rng root;
  explicit TrainStreams(std::uint64_t seed) : root(seed, "train") {}
  std::vector<std::size_t> order(std::size_t epoch, std::size_t n) const {
    Rng r = root.fork("shuffle").fork(epoch);
    return r.permutation(n);
  }
  Rng dropout(std::size_t epoch, std::size_t batch) const { return root.fork("dropout").fork(epoch).fork(batch); }
  Rng intervention(std::size_t epoch) const { return root.fork("abar").fork(epoch); }
};

/// Runs a generic minibatch loop; `batch_loss` builds the loss of one batch, or leaves it undefined
/// to skip the batch. Returns the per-epoch mean loss.
template <class LossFn>
std::vector<double> run_training(const std::vector<ad::Tensor>& params, const Dataset& d, const TrainConfig& cfg,
                                 LossFn batch_loss) {
  if (cfg.batch_size == 0) throw ConfigError("train.batch_size", "must be positive");
  if (!(cfg.lr > 0.0)) throw ConfigError("train.lr", "must be positive");
  auto ps = params;
  ad::Adam opt(ps, ad::AdamConfig{cfg.lr});
  const TrainStreams streams(cfg.seed);
  std::vector<double> history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = streams.order(epoch, d.size());
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch_size, order.size() - start));
      Rng drop = streams.dropout(epoch, batch);
      const LossTerms loss = batch_loss(epoch, idx, drop);
      if (!loss.total.defined()) continue;  // batch carries no usable signal
      const double value = loss.total.item();
      if (!std::isfinite(value)) {
        long head = -1;
        for (std::size_t k = 0; k < loss.heads.size(); ++k)
          if (!std::isfinite(loss.heads[k].item())) {
            head = static_cast<long>(k);
            break;
          }
        throw TrainingError(epoch, batch, head, "non-finite loss");
      }
      loss.total.backward();
      if (cfg.clip_norm > 0.0) ad::clip_grad_norm(ps, cfg.clip_norm);
      opt.step();
      opt.zero_grad();
      sum += value;
      ++batches;
    }
    history.push_back(batches ? sum / static_cast<double>(batches) : std::nan(""));
  }
  return history;
}

/// Algorithm: per minibatch, generate detached pseudo-outcomes under abar, then take one Adam
/// step on the pooled learning loss of backbone and heads jointly. Biased models skip generation.
inline std::vector<double> train(IgcModel& m, const Dataset& d, const TrainConfig& cfg) {
  check_training_data(d, m.tau());
  if (cfg.corruption < 0.0) throw ConfigError("train.corruption", "must be >= 0");
  if (!m.biased() && cfg.policy == SequencePolicy::fixed) check_intervention(cfg.abar, m.tau(), d.dims.a);
  if (cfg.fit_scaler) m.net().set_scaler(Scaler::fit(d));
  const Scaler& sc = m.net().scaler();
  std::vector<double> bias(d.dims.y);
  for (std::size_t j = 0; j < bias.size(); ++j) bias[j] = cfg.corruption / sc.y.sd[j];
  const TrainStreams streams(cfg.seed);
  std::size_t abar_epoch = static_cast<std::size_t>(-1);
  Matrix abar = cfg.abar;
  return run_training(m.net().parameters(), d, cfg, [&](std::size_t epoch, std::span<const std::size_t> idx, Rng& drop) {
    const HistoryBatch h = make_history_batch(d, idx, sc);
    if (m.biased()) return biased_loss(m, h, d, idx, true, &drop);
    if (cfg.policy == SequencePolicy::resample && abar_epoch != epoch) {
      Rng r = streams.intervention(epoch);
      abar = random_intervention(m.tau(), d.dims.a, r);
      abar_epoch = epoch;
    }
    const PseudoOutcomes p = generation_step(m, h, abar, bias);
    return learning_loss(m, h, d, idx, p, true, &drop);
  });
}

/// Training of the biased ablation (no pseudo-outcomes); the model must be built with biased = true.
inline std::vector<double> train_biased_ablation(IgcModel& m, const Dataset& d, const TrainConfig& cfg) {
  if (!m.biased()) throw ContractError("train_biased_ablation needs a model built for the ablation");
  return train(m, d, cfg);
}

/// CAPO estimates g_0(z(H_t), a_t) in outcome units, one row per query, without dropout.
inline std::vector<std::vector<double>> predict_capo(const IgcModel& m, const Dataset& d,
                                                     std::span<const CapoQuery> qs) {
  ad::NoGradGuard ng;
  std::vector<std::vector<double>> out;
  for_each_query_chunk(d, qs, m.tau(), [&](const QueryChunk& c) {
    const ad::Tensor z = encode_prefixes(m.net(), d, c.traj, c.cut, false, nullptr);
    append_outcomes(out, m.net().head(0, ad::concat({z, plan_tensor(c.abar, m.plan_length(0))}, 1)),
                    m.net().scaler().y);
  });
  return out;
}

inline std::vector<double> predict_capo(const IgcModel& m, const Trajectory& tr, std::size_t t, const Matrix& abar) {
  Dataset one;
  one.dims = m.dims();
  one.items.push_back(tr);
  CapoQuery q;
  q.trajectory_id = tr.id;
  q.t = t;
  q.a_seq = abar;
  return predict_capo(m, one, std::span<const CapoQuery>(&q, 1))[0];
}

struct PredictiveDistribution {
  std::vector<double> mean, std;
  std::vector<std::vector<double>> quantiles;  // quantiles[k][j] for level k
  std::vector<std::string> warnings;
};

/// Empirical quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ContractError("quantile of an empty sample");
  if (q < 0.0 || q > 1.0) throw ContractError("quantile level outside [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// MC dropout: K forward passes of the same query with dropout active.
inline PredictiveDistribution predict_with_uncertainty(const IgcModel& m, const Trajectory& tr, std::size_t t,
                                                       const Matrix& abar, std::size_t K,
                                                       const std::vector<double>& levels, std::uint64_t seed) {
  if (K < 2) throw ContractError("MC dropout needs K >= 2 draws");
  check_intervention(abar, m.tau(), m.dims().a);
  if (t >= tr.length()) throw ContractError("query cut beyond the observed history");
  ad::NoGradGuard ng;
  PredictiveDistribution out;
  const double p = m.net().backbone().config().dropout;
  if (p == 0.0) out.warnings.push_back("dropout probability is 0; predictive spread is degenerate");
  Dataset one;
  one.dims = m.dims();
  one.items.push_back(tr);
  const std::size_t dy = m.dims().y;
  std::vector<std::vector<double>> draws(dy);
  Rng rng(seed, "mc-dropout");
  for (std::size_t start = 0; start < K; start += kPredictChunk) {
    const std::size_t n = std::min(kPredictChunk, K - start);
    const std::vector<std::size_t> traj(n, 0), cut(n, t);
    const std::vector<const Matrix*> abars(n, &abar);
    Rng r = rng.fork(start);
    const ad::Tensor z = encode_prefixes(m.net(), one, traj, cut, true, &r);
    const ad::Tensor g = m.net().head(0, ad::concat({z, plan_tensor(abars, m.plan_length(0))}, 1));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dy; ++j) draws[j].push_back(m.net().scaler().y.inverse(g[i * dy + j], j));
  }
  out.mean.resize(dy);
  out.std.resize(dy);
  for (std::size_t j = 0; j < dy; ++j) {
    // Shifted by the first draw so identical draws give exactly zero spread.
    const double shift = draws[j][0];
    double s = 0.0, ss = 0.0;
    for (double v : draws[j]) {
      s += v - shift;
      ss += (v - shift) * (v - shift);
    }
    const double n = static_cast<double>(K);
    out.mean[j] = shift + s / n;
    out.std[j] = std::sqrt(std::max(0.0, (ss - s * s / n) / (n - 1)));
  }
  for (double q : levels) {
    std::vector<double> row(dy);
    for (std::size_t j = 0; j < dy; ++j) row[j] = quantile(draws[j], q);
    out.quantiles.push_back(std::move(row));
  }
  return out;
}

inline nlohmann::json to_json(const IgcConfig& c) {
  return {{"backbone", to_json(c.backbone)}, {"tau", c.tau}, {"head_hidden", c.head_hidden}};
}

inline IgcConfig igc_config_from_json(const nlohmann::json& j) {
  IgcConfig c;
  c.backbone = backbone_config_from_json(j.at("backbone"));
  c.tau = j.at("tau").get<std::size_t>();
  c.head_hidden = j.at("head_hidden").get<std::size_t>();
  return c;
}

inline nlohmann::json save_checkpoint(const IgcModel& m, nlohmann::json meta = nlohmann::json::object()) {
  return checkpoint_json(m.kind(), to_json(m.config()), m.net(), std::move(meta));
}

inline IgcModel load_igc_checkpoint(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  check_checkpoint_header(j, kind == "igc_biased" ? "igc_biased" : "igc");
  IgcModel m(igc_config_from_json(j.at("config")), dims_from_json(j.at("dims")), 0, kind == "igc_biased");
  m.net().set_scaler(scaler_from_json(j.at("scaler")));
  load_parameters(m.net(), j.at("tensors"));
  return m;
}

}  // namespace igc
