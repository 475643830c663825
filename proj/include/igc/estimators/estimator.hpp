#pragma once

#include <memory>

#include "igc/baselines/history_regressor.hpp"
#include "igc/baselines/ipw.hpp"
#include "igc/baselines/mc_gcomp.hpp"
#include "igc/data/io.hpp"

namespace igc {

enum class EstimatorKind { igc, igc_biased, history, ipw, gcomp };

inline std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::igc: return "igc";
    case EstimatorKind::igc_biased: return "igc_biased";
    case EstimatorKind::history: return "history";
    case EstimatorKind::ipw: return "ipw";
    case EstimatorKind::gcomp: return "gcomp";
  }
  return "?";
}

inline EstimatorKind estimator_kind_from_string(const std::string& s, const std::string& path = "estimator") {
  for (auto k : {EstimatorKind::igc, EstimatorKind::igc_biased, EstimatorKind::history, EstimatorKind::ipw,
                 EstimatorKind::gcomp})
    if (to_string(k) == s) return k;
  throw ConfigError(path, "unknown estimator '" + s + "' (expected igc, igc_biased, history, ipw or gcomp)");
}

/// Everything needed to fit one estimator for one plan.
struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::igc;
  BackboneConfig backbone;
  std::size_t tau = 2;
  std::size_t head_hidden = 16;
  TrainConfig train;
  IpwConfig ipw;
  GcompConfig gcomp;
  std::uint64_t seed = 0;  // initialization
};

/// A fitted estimator of E[Y_{t+tau}[abar] | H_t].
class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual EstimatorKind kind() const = 0;
  virtual std::size_t tau() const = 0;
  virtual std::vector<std::vector<double>> predict(const Dataset& d, std::span<const CapoQuery> qs) const = 0;
  virtual nlohmann::json checkpoint(nlohmann::json meta) const = 0;
  const std::vector<double>& loss_history() const { return history_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 protected:
  std::vector<double> history_;
  std::vector<std::string> warnings_;
};

namespace detail {

class IgcEstimator final : public Estimator {
 public:
  IgcEstimator(IgcModel m) : m_(std::move(m)) {}
  IgcEstimator(const EstimatorSpec& s, const Dataset& d)
      : m_(IgcConfig{s.backbone, s.tau, s.head_hidden}, d.dims, s.seed, s.kind == EstimatorKind::igc_biased) {
    history_ = train(m_, d, s.train);
  }
  EstimatorKind kind() const override { return m_.biased() ? EstimatorKind::igc_biased : EstimatorKind::igc; }
  std::size_t tau() const override { return m_.tau(); }
  std::vector<std::vector<double>> predict(const Dataset& d, std::span<const CapoQuery> qs) const override {
    return predict_capo(m_, d, qs);
  }
  nlohmann::json checkpoint(nlohmann::json meta) const override { return save_checkpoint(m_, std::move(meta)); }
  const IgcModel& model() const { return m_; }

 private:
  IgcModel m_;
};

class HistoryEstimator final : public Estimator {
 public:
  HistoryEstimator(HistoryRegressor m) : m_(std::move(m)) {}
  HistoryEstimator(const EstimatorSpec& s, const Dataset& d) : m_(s.backbone, d.dims, s.tau, s.head_hidden, s.seed) {
    history_ = train_history_regressor(m_, d, s.train);
  }
  EstimatorKind kind() const override { return EstimatorKind::history; }
  std::size_t tau() const override { return m_.tau(); }
  std::vector<std::vector<double>> predict(const Dataset& d, std::span<const CapoQuery> qs) const override {
    return predict_capo(m_, d, qs);
  }
  nlohmann::json checkpoint(nlohmann::json meta) const override {
    return checkpoint_json("history", config_json(m_), m_.net(), std::move(meta));
  }
  static nlohmann::json config_json(const HistoryRegressor& m) {
    return {{"backbone", to_json(m.net().backbone().config())}, {"tau", m.tau()}, {"head_hidden", m.net().head_hidden()}};
  }

 private:
  HistoryRegressor m_;
};

class IpwEstimator final : public Estimator {
 public:
  IpwEstimator(IpwModel m) : m_(std::move(m)) {}
  IpwEstimator(const EstimatorSpec& s, const Dataset& d) : m_(s.backbone, d.dims, s.tau, s.head_hidden, s.ipw, s.seed) {
    const IpwFit fit = train_ipw(m_, d, s.train);
    history_ = fit.outcome_history;
    warnings_ = fit.propensity.warnings;
    if (fit.skipped_batches > 0)
      warnings_.push_back(std::to_string(fit.skipped_batches) + " minibatches had zero total weight and were skipped");
  }
  EstimatorKind kind() const override { return EstimatorKind::ipw; }
  std::size_t tau() const override { return m_.tau(); }
  std::vector<std::vector<double>> predict(const Dataset& d, std::span<const CapoQuery> qs) const override {
    return predict_capo(m_, d, qs);
  }
  // Only the outcome regression is needed for prediction; the propensity network is not stored.
  nlohmann::json checkpoint(nlohmann::json meta) const override {
    nlohmann::json cfg = {{"backbone", to_json(m_.outcome().backbone().config())},
                          {"tau", m_.tau()},
                          {"head_hidden", m_.outcome().head_hidden()},
                          {"clip_eps", m_.config().clip_eps},
                          {"stabilized", m_.stabilized()},
                          {"propensity_fraction", m_.config().propensity_fraction},
                          {"abar", io::matrix_to_json(m_.abar())}};
    return checkpoint_json("ipw", std::move(cfg), m_.outcome(), std::move(meta));
  }

 private:
  IpwModel m_;
};

class GcompEstimator final : public Estimator {
 public:
  GcompEstimator(GcompModel m, GcompConfig g) : m_(std::move(m)), g_(g) {}
  GcompEstimator(const EstimatorSpec& s, const Dataset& d)
      : m_(s.backbone, d.dims, s.tau, s.head_hidden, s.seed), g_(s.gcomp) {
    if (g_.samples < 1) throw ConfigError("gcomp.samples", "must be >= 1");
    history_ = train_gcomp(m_, d, s.train);
  }
  EstimatorKind kind() const override { return EstimatorKind::gcomp; }
  std::size_t tau() const override { return m_.tau(); }
  std::vector<std::vector<double>> predict(const Dataset& d, std::span<const CapoQuery> qs) const override {
    return predict_capo(m_, d, qs, g_);
  }
  nlohmann::json checkpoint(nlohmann::json meta) const override {
    nlohmann::json cfg = {{"backbone", to_json(m_.net().backbone().config())},
                          {"tau", m_.tau()},
                          {"head_hidden", m_.net().head_hidden()},
                          {"samples", g_.samples},
                          {"deterministic", g_.deterministic},
                          {"rollout_seed", g_.seed}};
    return checkpoint_json("gcomp", std::move(cfg), m_.net(), std::move(meta));
  }

 private:
  GcompModel m_;
  GcompConfig g_;
};

}  // namespace detail

inline std::unique_ptr<Estimator> fit_estimator(const EstimatorSpec& s, const Dataset& d) {
  switch (s.kind) {
    case EstimatorKind::igc:
    case EstimatorKind::igc_biased: return std::make_unique<detail::IgcEstimator>(s, d);
    case EstimatorKind::history: return std::make_unique<detail::HistoryEstimator>(s, d);
    case EstimatorKind::ipw: return std::make_unique<detail::IpwEstimator>(s, d);
    case EstimatorKind::gcomp: return std::make_unique<detail::GcompEstimator>(s, d);
  }
  throw ContractError("fit_estimator: unknown estimator kind");
}

inline std::unique_ptr<Estimator> load_estimator(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("kind", "checkpoint has no estimator kind");
  const EstimatorKind kind = estimator_kind_from_string(j.at("kind").get<std::string>(), "kind");
  check_checkpoint_header(j, to_string(kind));
  const nlohmann::json& c = j.at("config");
  const Dims dims = dims_from_json(j.at("dims"));
  const Scaler scaler = scaler_from_json(j.at("scaler"));
  auto finish = [&](SequenceModel& net) {
    net.set_scaler(scaler);
    load_parameters(net, j.at("tensors"));
  };
  switch (kind) {
    case EstimatorKind::igc:
    case EstimatorKind::igc_biased: return std::make_unique<detail::IgcEstimator>(load_igc_checkpoint(j));
    case EstimatorKind::history: {
      HistoryRegressor m(backbone_config_from_json(c.at("backbone")), dims, c.at("tau").get<std::size_t>(),
                         c.at("head_hidden").get<std::size_t>(), 0);
      finish(m.net());
      return std::make_unique<detail::HistoryEstimator>(std::move(m));
    }
    case EstimatorKind::ipw: {
      IpwConfig ic{c.at("clip_eps").get<double>(), c.at("stabilized").get<bool>(),
                   c.at("propensity_fraction").get<double>()};
      const std::size_t tau = c.at("tau").get<std::size_t>();
      IpwModel m(backbone_config_from_json(c.at("backbone")), dims, tau, c.at("head_hidden").get<std::size_t>(), ic, 0);
      m.set_abar(io::matrix_from_json(c.at("abar"), tau, dims.a, "config.abar"));
      finish(m.outcome());
      return std::make_unique<detail::IpwEstimator>(std::move(m));
    }
    case EstimatorKind::gcomp: {
      GcompModel m(backbone_config_from_json(c.at("backbone")), dims, c.at("tau").get<std::size_t>(),
                   c.at("head_hidden").get<std::size_t>(), 0);
      finish(m.net());
      GcompConfig g{c.at("samples").get<std::size_t>(), c.at("deterministic").get<bool>(),
                    c.at("rollout_seed").get<std::uint64_t>()};
      return std::make_unique<detail::GcompEstimator>(std::move(m), g);
    }
  }
  throw ContractError("load_estimator: unknown estimator kind");
}

}  // namespace igc
