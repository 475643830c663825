#pragma once

#include <cmath>
#include <limits>

#include "igc/backbone/backbone.hpp"

namespace igc {

/// Scaled dot-product attention over already-projected q, k, v of shape (B, T, d).
/// Head m works on columns [m d/M, (m+1) d/M); its logits get the additive bias
/// rel_table[m, clamp(j - i, -l_max, l_max) + l_max] when `rel_table` (M, 2 l_max + 1) is defined.
/// Causal masking sets logits of keys j > i to -inf. Head outputs are concatenated.
inline ad::Tensor multi_head_attention(const ad::Tensor& q, const ad::Tensor& k, const ad::Tensor& v,
                                       std::size_t heads, const ad::Tensor& rel_table, bool causal) {
  if (q.rank() != 3 || k.shape() != v.shape() || q.dim(0) != k.dim(0) || q.dim(2) != k.dim(2) ||
      (causal && q.dim(1) != k.dim(1))) {
    throw DimensionError("attention: incompatible q/k/v shapes " + ad::to_string(q.shape()) + ", " +
                         ad::to_string(k.shape()));
  }
  const std::size_t d = q.dim(2), T = q.dim(1), S = k.dim(1);
  if (heads == 0 || d % heads != 0)
    throw ConfigError("backbone.heads", "hidden size " + std::to_string(d) + " is not divisible by " +
                                            std::to_string(heads) + " heads");
  if (rel_table.defined() && (rel_table.rank() != 2 || rel_table.dim(0) != heads))
    throw DimensionError("attention: relative-position table must be (heads, 2 l_max + 1)");
  const std::size_t dk = d / heads;
  ad::Tensor mask;
  if (causal) {
    std::vector<double> m(T * S, 0.0);
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t j = i + 1; j < S; ++j) m[i * S + j] = -std::numeric_limits<double>::infinity();
    mask = ad::Tensor::constant({T, S}, std::move(m));
  }
  std::vector<ad::Tensor> outs;
  outs.reserve(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::size_t m = 0; m < heads; ++m) {
    const ad::Tensor qh = heads == 1 ? q : ad::slice(q, 2, m * dk, (m + 1) * dk);
    const ad::Tensor kh = heads == 1 ? k : ad::slice(k, 2, m * dk, (m + 1) * dk);
    const ad::Tensor vh = heads == 1 ? v : ad::slice(v, 2, m * dk, (m + 1) * dk);
    ad::Tensor logits = ad::scale(ad::matmul(qh, ad::transpose(kh)), scale);
    if (rel_table.defined()) {
      if (T != S) throw DimensionError("attention: relative bias requires self-length keys");
      const std::size_t w = rel_table.dim(1);
      logits = ad::add(logits, ad::rel_position_bias(ad::reshape(ad::slice(rel_table, 0, m, m + 1), {w}), T));
    }
    if (causal) logits = ad::add(logits, mask);
    outs.push_back(ad::matmul(ad::softmax(logits, -1), vh));
  }
  return heads == 1 ? outs[0] : ad::concat(outs, 2);
}

/// One attention module: projections W_q, W_k, W_v (no bias, no output projection) plus a
/// learned relative-position logit table initialized at zero.
struct AttentionModule {
  ad::Tensor Wq, Wk, Wv, table;
  std::size_t heads = 1;

  AttentionModule() = default;
  AttentionModule(nn::ParamStore& store, const std::string& name, std::size_t d, std::size_t heads_,
                  std::size_t l_max, Rng& rng)
      : heads(heads_) {
    Rng r = rng.fork(name);
    Wq = store.add(name + ".Wq", ad::xavier_uniform({d, d}, d, d, r));
    Wk = store.add(name + ".Wk", ad::xavier_uniform({d, d}, d, d, r));
    Wv = store.add(name + ".Wv", ad::xavier_uniform({d, d}, d, d, r));
    table = store.add(name + ".rel", ad::Tensor::parameter({heads, 2 * l_max + 1},
                                                           std::vector<double>(heads * (2 * l_max + 1), 0.0)));
  }

  ad::Tensor operator()(const ad::Tensor& query, const ad::Tensor& source) const {
    return multi_head_attention(ad::matmul(query, Wq), ad::matmul(source, Wk), ad::matmul(source, Wv), heads, table,
                                true);
  }
};

/// Multi-input transformer: one sub-network per input stream (outcomes, covariates with
/// statics, previous treatments). Streams of width 0 are omitted.
///   1. per-stream linear embedding;
///   2. J blocks of [self-attention + residual] -> [cross-attention over the other streams + residual]
///      -> LayerNorm(Z + Dropout(Linear(Dropout(ReLU(Linear(Z))))));
///   3. Z = ELU(Linear(Dropout(mean over streams))).
/// All attention is causal.
class TransformerBackbone : public Backbone {
 public:
  TransformerBackbone(BackboneConfig cfg, std::size_t dy, std::size_t dx, std::size_t da, Rng& rng) : Backbone(cfg) {
    if (cfg_.heads == 0 || cfg_.hidden % cfg_.heads != 0)
      throw ConfigError("backbone.heads", "hidden size " + std::to_string(cfg_.hidden) + " is not divisible by " +
                                              std::to_string(cfg_.heads) + " heads");
    Rng r = rng.fork("transformer");
    const std::size_t widths[3] = {dy, dx, da};
    const char* names[3] = {"y", "x", "a"};
    for (std::size_t s = 0; s < 3; ++s) {
      if (widths[s] == 0) continue;
      Stream st;
      st.source = s;
      st.width = widths[s];
      st.embed = nn::Linear(params_, std::string("tf.") + names[s] + ".embed", widths[s], cfg_.hidden, r);
      streams_.push_back(std::move(st));
    }
    if (streams_.empty()) throw ConfigError("backbone", "transformer needs at least one non-empty input stream");
    for (std::size_t j = 0; j < cfg_.blocks; ++j) {
      Block blk;
      for (const auto& st : streams_) {
        const std::string p = "tf.b" + std::to_string(j) + "." + names[st.source];
        blk.self_attn.emplace_back(params_, p + ".self", cfg_.hidden, cfg_.heads, cfg_.max_rel, r);
        blk.cross_attn.emplace_back(params_, p + ".cross", cfg_.hidden, cfg_.heads, cfg_.max_rel, r);
        blk.ff1.emplace_back(params_, p + ".ff1", cfg_.hidden, cfg_.ff_hidden, r);
        blk.ff2.emplace_back(params_, p + ".ff2", cfg_.ff_hidden, cfg_.hidden, r);
      }
      blocks_.push_back(std::move(blk));
    }
    out_ = nn::Linear(params_, "tf.out", cfg_.hidden, cfg_.repr, r);
  }

  std::size_t stream_count() const { return streams_.size(); }

  ad::Tensor encode_streams(const ad::Tensor& y, const ad::Tensor& x, const ad::Tensor& a,
                            const std::vector<std::size_t>&, bool training, Rng* rng) const override {
    const std::size_t K = streams_.size();
    const ad::Tensor* src[3] = {&y, &x, &a};
    std::vector<ad::Tensor> Z;
    for (const auto& st : streams_) {
      const ad::Tensor& in = *src[st.source];
      if (in.dim(2) != st.width) throw DimensionError("transformer: input width does not match the configured streams");
      Z.push_back(st.embed(in));
    }
    for (std::size_t s = 0; s < 3; ++s)
      if (src[s]->dim(2) > 0 && std::none_of(streams_.begin(), streams_.end(), [s](const Stream& st) { return st.source == s; }))
        throw DimensionError("transformer: input width does not match the configured streams");
    const double p = cfg_.dropout;
    for (const auto& blk : blocks_) {
      std::vector<ad::Tensor> Q(K);
      for (std::size_t k = 0; k < K; ++k) Q[k] = ad::add(Z[k], blk.self_attn[k](Z[k], Z[k]));
      for (std::size_t k = 0; k < K; ++k) {
        ad::Tensor c = Q[k];
        for (std::size_t l = 0; l < K; ++l)
          if (l != k) c = ad::add(c, blk.cross_attn[k](Q[k], Q[l]));
        ad::Tensor f = ad::dropout(ad::relu(blk.ff1[k](c)), p, training, rng);
        f = ad::dropout(blk.ff2[k](f), p, training, rng);
        Z[k] = ad::layer_norm(ad::add(c, f));
      }
    }
    ad::Tensor avg = Z[0];
    for (std::size_t k = 1; k < K; ++k) avg = ad::add(avg, Z[k]);
    if (K > 1) avg = ad::scale(avg, 1.0 / static_cast<double>(K));
    return ad::elu(out_(ad::dropout(avg, p, training, rng)));
  }

 private:
  struct Stream {
    std::size_t source = 0;
    std::size_t width = 0;
    nn::Linear embed;
  };
  struct Block {
    std::vector<AttentionModule> self_attn, cross_attn;
    std::vector<nn::Linear> ff1, ff2;
  };

  std::vector<Stream> streams_;
  std::vector<Block> blocks_;
  nn::Linear out_;
};

}  // namespace igc
