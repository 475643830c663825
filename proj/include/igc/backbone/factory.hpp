#pragma once

#include "igc/backbone/lstm.hpp"
#include "igc/backbone/transformer.hpp"

namespace igc {

inline std::unique_ptr<Backbone> make_backbone(const BackboneConfig& cfg, const Dims& dims, Rng& rng) {
  const std::size_t dx = dims.x + dims.s;
  if (cfg.hidden == 0 || cfg.repr == 0) throw ConfigError("backbone", "hidden and representation sizes must be positive");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("backbone.dropout", "must lie in [0, 1)");
  if (cfg.kind == BackboneKind::lstm) return std::make_unique<LstmBackbone>(cfg, dims.y + dx + dims.a, rng);
  return std::make_unique<TransformerBackbone>(cfg, dims.y, dx, dims.a, rng);
}

}  // namespace igc
