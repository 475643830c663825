#pragma once

#include <map>
#include <string>
#include <vector>

#include "igc/autodiff/adam.hpp"
#include "igc/autodiff/ops.hpp"

namespace igc::nn {

using ad::Shape;
using ad::Tensor;

/// Ordered, named collection of trainable leaves. Names are stable keys for checkpoints.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
    index_[name] = items_.size();
    items_.emplace_back(name, t);
    return t;
  }

  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return items_[it->second].second;
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    out.reserve(items_.size());
    for (const auto& [_, t] : items_) out.push_back(t);
    return out;
  }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : items_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : items_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::map<std::string, std::size_t> index_;
};

/// y = x W + b over the last axis.
struct Linear {
  Tensor weight;  // (in, out)
  Tensor bias;    // (out)

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    Rng r = rng.fork(name);
    weight = store.add(name + ".weight", ad::xavier_uniform({in, out}, in, out, r));
    bias = store.add(name + ".bias", Tensor::parameter({out}, std::vector<double>(out, 0.0)));
  }

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor operator()(const Tensor& x) const { return ad::add(ad::matmul(x, weight), bias); }
};

/// Linear -> ELU -> Linear read-out.
struct HeadMlp {
  Linear l1, l2;

  HeadMlp() = default;
  HeadMlp(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng)
      : l1(store, name + ".l1", in, hidden, rng), l2(store, name + ".l2", hidden, out, rng) {}

  Tensor operator()(const Tensor& x) const { return l2(ad::elu(l1(x))); }
};

/// Sets every value of every parameter to `v` (test fixtures, degenerate checks).
inline void fill_params(ParamStore& store, double v) {
  for (auto t : store.tensors())
    for (double& x : t.mutable_values()) x = v;
}

}  // namespace igc::nn
