#pragma once

#include "igc/data/config.hpp"
#include "igc/estimators/estimator.hpp"

namespace igc {

inline BackboneConfig parse_backbone(const config::json& j, const std::string& path) {
  BackboneConfig c;
  if (j.is_null()) return c;
  config::Section s(j, path);
  std::string kind = to_string(c.kind);
  s.get("kind", kind);
  c.kind = backbone_kind_from_string(kind, config::join(path, "kind"));
  s.get("hidden", c.hidden);
  s.get("repr", c.repr);
  s.get("blocks", c.blocks);
  s.get("heads", c.heads);
  s.get("ff_hidden", c.ff_hidden);
  s.get("max_rel", c.max_rel);
  s.get("dropout", c.dropout);
  s.finish();
  if (c.hidden == 0 || c.repr == 0) throw ConfigError(path, "hidden and repr must be positive");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError(config::join(path, "dropout"), "must lie in [0, 1)");
  return c;
}

inline SequencePolicy sequence_policy_from_string(const std::string& s, const std::string& path) {
  if (s == "fixed") return SequencePolicy::fixed;
  if (s == "resample") return SequencePolicy::resample;
  throw ConfigError(path, "unknown policy '" + s + "' (expected fixed or resample)");
}

/// Optimization settings; the plan and the seed are set by the caller.
inline TrainConfig parse_train(const config::json& j, const std::string& path) {
  TrainConfig c;
  if (j.is_null()) return c;
  config::Section s(j, path);
  s.get("epochs", c.epochs);
  s.get("batch_size", c.batch_size);
  s.get("lr", c.lr);
  s.get("clip_norm", c.clip_norm);
  std::string policy = "fixed";
  s.get("policy", policy);
  c.policy = sequence_policy_from_string(policy, config::join(path, "policy"));
  s.get("corruption", c.corruption);
  s.get("fit_scaler", c.fit_scaler);
  s.finish();
  if (c.batch_size == 0) throw ConfigError(config::join(path, "batch_size"), "must be positive");
  if (!(c.lr > 0.0)) throw ConfigError(config::join(path, "lr"), "must be positive");
  if (c.corruption < 0.0) throw ConfigError(config::join(path, "corruption"), "must be >= 0");
  return c;
}

inline IpwConfig parse_ipw(const config::json& j, const std::string& path) {
  IpwConfig c;
  if (j.is_null()) return c;
  config::Section s(j, path);
  s.get("clip_eps", c.clip_eps);
  if (s.has("stabilized")) c.stabilized = s.require<bool>("stabilized");
  s.get("propensity_fraction", c.propensity_fraction);
  s.finish();
  if (!(c.clip_eps > 0.0 && c.clip_eps < 0.5)) throw ConfigError(config::join(path, "clip_eps"), "must lie in (0, 0.5)");
  if (!(c.propensity_fraction > 0.0 && c.propensity_fraction < 1.0))
    throw ConfigError(config::join(path, "propensity_fraction"), "must lie in (0, 1)");
  return c;
}

inline GcompConfig parse_gcomp(const config::json& j, const std::string& path) {
  GcompConfig c;
  if (j.is_null()) return c;
  config::Section s(j, path);
  s.get("samples", c.samples);
  s.get("deterministic", c.deterministic);
  s.finish();
  if (c.samples < 1) throw ConfigError(config::join(path, "samples"), "must be >= 1");
  return c;
}

inline config::json train_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"clip_norm", c.clip_norm},
          {"policy", c.policy == SequencePolicy::fixed ? "fixed" : "resample"},
          {"corruption", c.corruption},
          {"fit_scaler", c.fit_scaler}};
}

inline config::json ipw_to_json(const IpwConfig& c) {
  config::json j = {{"clip_eps", c.clip_eps}, {"propensity_fraction", c.propensity_fraction}};
  if (c.stabilized) j["stabilized"] = *c.stabilized;
  return j;
}

inline config::json gcomp_to_json(const GcompConfig& c) {
  return {{"samples", c.samples}, {"deterministic", c.deterministic}};
}

/// Plan of `rows` steps: an explicit matrix, or all-ones when `j` is null.
inline Matrix parse_plan(const config::json& j, std::size_t rows, std::size_t da, const std::string& path) {
  if (j.is_null()) return Matrix(rows, da, 1.0);
  if (!j.is_array() || j.size() < rows)
    throw ConfigError(path, "plan needs at least " + std::to_string(rows) + " rows");
  Matrix m(rows, da);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = config::Section::convert<std::vector<double>>(j[r], path + "[" + std::to_string(r) + "]");
    if (row.size() != da)
      throw ConfigError(path + "[" + std::to_string(r) + "]", "expected " + std::to_string(da) + " treatment columns");
    for (std::size_t c = 0; c < da; ++c) {
      if (row[c] != 0.0 && row[c] != 1.0)
        throw ConfigError(path + "[" + std::to_string(r) + "][" + std::to_string(c) + "]", "treatments must be 0 or 1");
      m(r, c) = row[c];
    }
  }
  return m;
}

inline config::json plan_to_json(const Matrix& m) { return io::matrix_to_json(m); }

}  // namespace igc
