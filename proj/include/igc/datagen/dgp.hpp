#pragma once

#include <variant>

#include "igc/data/config.hpp"
#include "igc/datagen/discrete_scm.hpp"
#include "igc/datagen/queries.hpp"
#include "igc/datagen/semisynth.hpp"
#include "igc/datagen/tumor.hpp"

namespace igc {

enum class DgpKind { tumor, semisynth, scm };

inline std::string to_string(DgpKind k) {
  switch (k) {
    case DgpKind::tumor: return "tumor";
    case DgpKind::semisynth: return "semisynth";
    case DgpKind::scm: return "scm";
  }
  return "?";
}

inline DgpKind dgp_kind_from_string(const std::string& s, const std::string& path) {
  for (auto k : {DgpKind::tumor, DgpKind::semisynth, DgpKind::scm})
    if (to_string(k) == s) return k;
  throw ConfigError(path, "unknown dgp '" + s + "' (expected tumor, semisynth or scm)");
}

// Field lists shared by parsing and serialization.
template <class P, class F>
void tumor_fields(P& p, F&& f) {
  f("rho_g", p.rho_g);
  f("rho_g_sd", p.rho_g_sd);
  f("K", p.K);
  f("alpha_c", p.alpha_c);
  f("alpha_c_sd", p.alpha_c_sd);
  f("alpha_r", p.alpha_r);
  f("alpha_r_sd", p.alpha_r_sd);
  f("beta_r", p.beta_r);
  f("D_max", p.D_max);
  f("sigma_eps", p.sigma_eps);
  f("gamma", p.gamma);
  f("rho_ov", p.rho_ov);
  f("omega", p.omega);
  f("u_logit", p.u_logit);
  f("window", p.window);
  f("chemo_dose", p.chemo_dose);
  f("chemo_decay", p.chemo_decay);
  f("radio_dose", p.radio_dose);
  f("init_diameter_logmean", p.init_diameter_logmean);
  f("init_diameter_logsd", p.init_diameter_logsd);
  f("min_volume", p.min_volume);
  f("T_min", p.T_min);
  f("T_max", p.T_max);
}

template <class P, class F>
void semisynth_fields(P& p, F&& f) {
  f("d_x", p.d_x);
  f("d_s", p.d_s);
  f("ar_coef", p.ar_coef);
  f("ar_noise", p.ar_noise);
  f("rff_features", p.rff_features);
  f("rff_bandwidth", p.rff_bandwidth);
  f("time_bandwidth", p.time_bandwidth);
  f("alpha_s", p.alpha_s);
  f("alpha_g", p.alpha_g);
  f("alpha_f", p.alpha_f);
  f("noise_sd", p.noise_sd);
  f("gamma_y", p.gamma_y);
  f("gamma_x", p.gamma_x);
  f("bias", p.bias);
  f("omega", p.omega);
  f("beta", p.beta);
  f("function_seed", p.function_seed);
  f("T_min", p.T_min);
  f("T_max", p.T_max);
}

template <class P, class F>
void scm_fields(P& p, F&& f) {
  f("init", p.init);
  f("propensity", p.propensity);
  f("px", p.px);
  f("py", p.py);
  f("T", p.T);
}

/// One data-generating process with its parameters, plus the ground-truth oracle settings.
struct DgpConfig {
  DgpKind kind = DgpKind::tumor;
  tumor::TumorParams tumor;
  semisynth::SemiSynthParams semisynth;
  scm::DiscreteScm scm;
  std::size_t oracle_draws = 200;  // Monte-Carlo rollouts per query (stochastic DGPs)

  Dims dims() const {
    switch (kind) {
      case DgpKind::tumor: return Dims{1, 0, 2, 0};
      case DgpKind::semisynth: return Dims{semisynth::kDy, semisynth.d_x, semisynth::kDa, semisynth.d_s};
      case DgpKind::scm: return Dims{1, 1, 1, 0};
    }
    return {};
  }

  /// Divisor for the normalized RMSE: the volume cap for the tumor model, 1 otherwise.
  double outcome_scale() const { return kind == DgpKind::tumor ? tumor.max_volume() : 1.0; }

  void validate() const {
    switch (kind) {
      case DgpKind::tumor: tumor.validate(); break;
      case DgpKind::semisynth: semisynth.validate(); break;
      case DgpKind::scm: scm.validate(); break;
    }
    if (oracle_draws < 1) throw ConfigError("dgp.oracle_draws", "must be >= 1");
  }
};

inline DgpConfig dgp_config_from_json(const config::json& j, const std::string& path = "dgp") {
  config::Section s(j, path);
  DgpConfig c;
  c.kind = dgp_kind_from_string(s.require<std::string>("kind"), config::join(path, "kind"));
  s.get("oracle_draws", c.oracle_draws);
  const config::json& params = s.raw("params");
  if (!params.is_null()) {
    config::Section ps(params, config::join(path, "params"));
    auto read = [&](const char* key, auto& field) { ps.get(key, field); };
    switch (c.kind) {
      case DgpKind::tumor: tumor_fields(c.tumor, read); break;
      case DgpKind::semisynth: semisynth_fields(c.semisynth, read); break;
      case DgpKind::scm: scm_fields(c.scm, read); break;
    }
    ps.finish();
  }
  s.finish();
  c.validate();
  return c;
}

inline config::json to_json(const DgpConfig& c) {
  config::json params = config::json::object();
  auto write = [&](const char* key, const auto& field) { params[key] = field; };
  switch (c.kind) {
    case DgpKind::tumor: tumor_fields(c.tumor, write); break;
    case DgpKind::semisynth: semisynth_fields(c.semisynth, write); break;
    case DgpKind::scm: scm_fields(c.scm, write); break;
  }
  return {{"kind", to_string(c.kind)}, {"oracle_draws", c.oracle_draws}, {"params", params}};
}

/// Simulates N trajectories with ids first_id.. from the stream `seed`.
inline Dataset simulate(const DgpConfig& c, std::size_t N, std::uint64_t seed, std::uint64_t first_id = 0) {
  switch (c.kind) {
    case DgpKind::tumor: return tumor::simulate_tumor_dataset(c.tumor, N, seed, first_id);
    case DgpKind::semisynth: return semisynth::simulate_semisynth_dataset(c.semisynth, N, seed, first_id);
    case DgpKind::scm: return scm::simulate_dataset(c.scm, N, seed, first_id);
  }
  throw ContractError("simulate: unknown dgp");
}

/// Ground-truth CAPO for trajectories simulated from `seed` (the oracle needs the latent
/// per-unit draws, which are keyed by that seed and the trajectory id).
inline OracleFn make_oracle(const DgpConfig& c, std::uint64_t seed) {
  switch (c.kind) {
    case DgpKind::tumor:
      return [c, seed](const Trajectory& tr, std::size_t t, const Matrix& abar) {
        const auto o = tumor::counterfactual_oracle(c.tumor, seed, tr, t, abar, c.oracle_draws);
        return OracleResult{{o.mean}, o.se, o.draws > 1 ? "monte-carlo" : "deterministic"};
      };
    case DgpKind::semisynth: {
      auto f = std::make_shared<semisynth::Functions>(semisynth::make_functions(c.semisynth));
      return [c, f, seed](const Trajectory& tr, std::size_t t, const Matrix& abar) {
        const auto o = semisynth::counterfactual_oracle(c.semisynth, *f, seed, tr, t, abar, c.oracle_draws);
        double se = 0.0;
        for (double v : o.se) se = std::max(se, v);
        return OracleResult{o.mean, se, "monte-carlo"};
      };
    }
    case DgpKind::scm:
      return [c](const Trajectory& tr, std::size_t t, const Matrix& abar) {
        return OracleResult{{scm::exact_values(c.scm, tr, t, abar).gformula}, 0.0, "enumeration"};
      };
  }
  throw ContractError("make_oracle: unknown dgp");
}

}  // namespace igc
