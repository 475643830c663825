#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "igc/backbone/factory.hpp"

namespace igc {

struct HeadSpec {
  std::string name;
  std::size_t in = 0, out = 0;
};

/// Backbone plus named read-out heads and the standardization of the training data.
/// Every estimator is built on one of these.
class SequenceModel {
 public:
  SequenceModel(const BackboneConfig& cfg, const Dims& dims, std::size_t head_hidden, std::vector<HeadSpec> heads,
                std::uint64_t seed)
      : dims_(dims), head_hidden_(head_hidden), specs_(std::move(heads)), scaler_(Scaler::identity(dims)) {
    if (head_hidden == 0) throw ConfigError("head_hidden", "must be positive");
    const Rng init(seed, "init");
    Rng bb = init.fork("backbone");
    backbone_ = make_backbone(cfg, dims, bb);
    Rng hr = init.fork("heads");
    for (const auto& s : specs_) heads_.emplace_back(head_params_, s.name, s.in, head_hidden, s.out, hr);
  }

  const Backbone& backbone() const { return *backbone_; }
  const Dims& dims() const { return dims_; }
  std::size_t head_hidden() const { return head_hidden_; }
  std::size_t head_count() const { return heads_.size(); }
  const HeadSpec& head_spec(std::size_t k) const { return specs_.at(k); }
  const Scaler& scaler() const { return scaler_; }
  void set_scaler(Scaler s) { scaler_ = std::move(s); }

  ad::Tensor head(std::size_t k, const ad::Tensor& input) const { return heads_.at(k)(input); }

  std::vector<std::pair<std::string, ad::Tensor>> named_parameters() const {
    auto out = backbone_->params().items();
    for (const auto& item : head_params_.items()) out.push_back(item);
    return out;
  }

  std::vector<ad::Tensor> parameters() const {
    std::vector<ad::Tensor> out;
    for (auto& [_, t] : named_parameters()) out.push_back(t);
    return out;
  }

  nn::ParamStore& head_params() { return head_params_; }
  nn::ParamStore& backbone_params() { return backbone_->params(); }

 private:
  Dims dims_;
  std::size_t head_hidden_;
  std::vector<HeadSpec> specs_;
  Scaler scaler_;
  std::unique_ptr<Backbone> backbone_;
  nn::ParamStore head_params_;
  std::vector<nn::HeadMlp> heads_;
};

/// Current and upcoming treatments per step: out[b, s] = A_s ++ ... ++ A_{s+k-1} (zeros past the end).
inline std::vector<double> treatment_windows(const Dataset& d, std::span<const std::size_t> idx, std::size_t T,
                                             std::size_t k) {
  const std::size_t da = d.dims.a, w = k * da;
  std::vector<double> out(idx.size() * T * w, 0.0);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Trajectory& tr = d.items[idx[b]];
    for (std::size_t s = 0; s < std::min(T, tr.length()); ++s)
      for (std::size_t j = 0; j < k && s + j < tr.length(); ++j)
        for (std::size_t c = 0; c < da; ++c) out[(b * T + s) * w + j * da + c] = tr.A(s + j, c);
  }
  return out;
}

/// Rows of a (B, T, d) tensor at the given (b, s) positions, as (R, d).
inline ad::Tensor gather_steps(const ad::Tensor& z, std::span<const BranchCut> at) {
  const std::size_t B = z.dim(0), T = z.dim(1), d = z.dim(2);
  std::vector<std::size_t> rows;
  rows.reserve(at.size());
  for (const auto& c : at) rows.push_back(c.row * T + c.t);
  return ad::index_select(ad::reshape(z, {B * T, d}), std::move(rows));
}

inline void check_intervention(const Matrix& abar, std::size_t tau, std::size_t da) {
  if (abar.rows != tau) throw ContractError("interventional sequence has " + std::to_string(abar.rows) +
                                            " steps, model horizon is " + std::to_string(tau));
  if (abar.cols != da) throw DimensionError("interventional sequence width does not match the treatment dimension");
  for (double v : abar.data)
    if (v != 0.0 && v != 1.0) throw ContractError("interventional treatments must be binary");
}

inline constexpr std::size_t kPredictChunk = 512;

/// Resolved queries of one prediction chunk.
struct QueryChunk {
  std::vector<std::size_t> traj, cut;
  std::vector<const Matrix*> abar;
  std::size_t size() const { return traj.size(); }
};

/// Validates queries and hands them to `f` in chunks of at most kPredictChunk.
template <class F>
void for_each_query_chunk(const Dataset& d, std::span<const CapoQuery> qs, std::size_t tau, F f) {
  for (std::size_t start = 0; start < qs.size(); start += kPredictChunk) {
    const std::size_t n = std::min(kPredictChunk, qs.size() - start);
    QueryChunk c;
    for (std::size_t i = 0; i < n; ++i) {
      const CapoQuery& q = qs[start + i];
      check_intervention(q.a_seq, tau, d.dims.a);
      const std::size_t k = find_trajectory(d, q.trajectory_id);
      if (q.t >= d.items[k].length()) throw ContractError("query cut beyond the observed history");
      c.traj.push_back(k);
      c.cut.push_back(q.t);
      c.abar.push_back(&q.a_seq);
    }
    f(c);
  }
}

/// Appends the rows of a standardized (n, d_y) output in outcome units.
inline void append_outcomes(std::vector<std::vector<double>>& out, const ad::Tensor& g, const Standardizer& sy) {
  const std::size_t n = g.dim(0), dy = g.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(dy);
    for (std::size_t j = 0; j < dy; ++j) row[j] = sy.inverse(g[i * dy + j], j);
    out.push_back(std::move(row));
  }
}

/// Encodes each history prefix H_t (length t + 1) and returns Z_t as (Q, d_z).
inline ad::Tensor encode_prefixes(const SequenceModel& net, const Dataset& d, std::span<const std::size_t> traj,
                                  std::span<const std::size_t> cut, bool training, Rng* rng) {
  std::vector<std::size_t> len(cut.size());
  for (std::size_t i = 0; i < cut.size(); ++i) len[i] = cut[i] + 1;
  const HistoryBatch h = make_history_batch(d, traj, net.scaler(), len);
  const ad::Tensor z = net.backbone().encode(h, training, rng);
  std::vector<BranchCut> at(cut.size());
  for (std::size_t i = 0; i < cut.size(); ++i) at[i] = {i, cut[i]};
  return gather_steps(z, at);
}

/// Flattened rows 0..k-1 of each plan, as (R, k * d_a).
inline ad::Tensor plan_tensor(const std::vector<const Matrix*>& abars, std::size_t k) {
  const std::size_t da = abars.empty() ? 0 : abars[0]->cols;
  std::vector<double> v;
  v.reserve(abars.size() * k * da);
  for (const Matrix* a : abars) v.insert(v.end(), a->data.begin(), a->data.begin() + static_cast<long>(k * da));
  return ad::Tensor::constant({abars.size(), k * da}, std::move(v));
}

// ---------- checkpoint pieces ----------

inline nlohmann::json to_json(const BackboneConfig& c) {
  return {{"kind", to_string(c.kind)}, {"hidden", c.hidden},       {"repr", c.repr},
          {"blocks", c.blocks},        {"heads", c.heads},         {"ff_hidden", c.ff_hidden},
          {"max_rel", c.max_rel},      {"dropout", c.dropout}};
}

inline BackboneKind backbone_kind_from_string(const std::string& s, const std::string& path) {
  if (s == "lstm") return BackboneKind::lstm;
  if (s == "transformer") return BackboneKind::transformer;
  throw ConfigError(path, "unknown backbone kind '" + s + "' (expected lstm or transformer)");
}

inline BackboneConfig backbone_config_from_json(const nlohmann::json& j) {
  BackboneConfig c;
  c.kind = backbone_kind_from_string(j.at("kind").get<std::string>(), "backbone.kind");
  c.hidden = j.at("hidden").get<std::size_t>();
  c.repr = j.at("repr").get<std::size_t>();
  c.blocks = j.at("blocks").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ff_hidden = j.at("ff_hidden").get<std::size_t>();
  c.max_rel = j.at("max_rel").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

inline nlohmann::json to_json(const Standardizer& s) { return {{"mean", s.mean}, {"sd", s.sd}}; }
inline Standardizer standardizer_from_json(const nlohmann::json& j) {
  return {j.at("mean").get<std::vector<double>>(), j.at("sd").get<std::vector<double>>()};
}
inline nlohmann::json to_json(const Scaler& s) { return {{"y", to_json(s.y)}, {"x", to_json(s.x)}, {"s", to_json(s.s)}}; }
inline Scaler scaler_from_json(const nlohmann::json& j) {
  return {standardizer_from_json(j.at("y")), standardizer_from_json(j.at("x")), standardizer_from_json(j.at("s"))};
}

inline nlohmann::json parameters_to_json(const SequenceModel& m) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, t] : m.named_parameters())
    out[name] = {{"shape", t.shape()}, {"values", std::vector<double>(t.values().begin(), t.values().end())}};
  return out;
}

/// Copies checkpointed values into a freshly built model, validating names and shapes.
inline void load_parameters(SequenceModel& m, const nlohmann::json& tensors) {
  const auto named = m.named_parameters();
  if (tensors.size() != named.size())
    throw ConfigError("tensors", "checkpoint has " + std::to_string(tensors.size()) + " tensors, model expects " +
                                     std::to_string(named.size()));
  for (auto [name, t] : named) {
    if (!tensors.contains(name)) throw ConfigError("tensors." + name, "missing from checkpoint");
    const auto& e = tensors.at(name);
    if (e.at("shape").get<ad::Shape>() != t.shape())
      throw ConfigError("tensors." + name, "shape mismatch: expected " + ad::to_string(t.shape()));
    const auto values = e.at("values").get<std::vector<double>>();
    if (values.size() != t.size()) throw ConfigError("tensors." + name, "value count mismatch");
    std::copy(values.begin(), values.end(), t.mutable_values().begin());
  }
}

inline nlohmann::json to_json(const Dims& d) { return {{"y", d.y}, {"x", d.x}, {"a", d.a}, {"s", d.s}}; }
inline Dims dims_from_json(const nlohmann::json& j) {
  return Dims{j.at("y").get<std::size_t>(), j.at("x").get<std::size_t>(), j.at("a").get<std::size_t>(),
              j.at("s").get<std::size_t>()};
}

inline constexpr const char* kCheckpointFormat = "igc-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_json(const std::string& kind, nlohmann::json config, const SequenceModel& m,
                                      nlohmann::json meta) {
  return {{"format", kCheckpointFormat}, {"version", kCheckpointVersion}, {"kind", kind},
          {"config", std::move(config)}, {"dims", to_json(m.dims())},     {"scaler", to_json(m.scaler())},
          {"tensors", parameters_to_json(m)}, {"meta", std::move(meta)}};
}

inline void check_checkpoint_header(const nlohmann::json& j, const std::string& kind) {
  if (j.value("format", "") != kCheckpointFormat) throw ConfigError("format", "not an igc checkpoint");
  if (j.value("version", 0) != kCheckpointVersion)
    throw ConfigError("version", "unsupported checkpoint version " + j.value("version", nlohmann::json()).dump());
  if (j.at("kind").get<std::string>() != kind)
    throw ConfigError("kind", "checkpoint holds '" + j.at("kind").get<std::string>() + "', expected '" + kind + "'");
}

}  // namespace igc
