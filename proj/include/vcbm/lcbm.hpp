#pragma once

// Localized Concept Bottleneck. 17 per-explanation affine heads score every
// merged token; late averaging turns K per-token logits into one logit per
// explanation; a sparse 7 x 17 linear layer maps explanation logits to
// maneuver logits. Heads are affine on purpose: mean-then-head equals
// head-then-mean, so the K=1 ablation is an exact special case.

#include <cmath>
#include <cstddef>
#include <utility>

#include "vcbm/errors.hpp"
#include "vcbm/labels.hpp"
#include "vcbm/ltm.hpp"
#include "vcbm/rng.hpp"
#include "vcbm/tensor.hpp"

namespace vcbm {

struct BottleneckParams {
  Tensor head_weight;   // 17 x Dim', one head per row
  Tensor head_bias;     // 17
  Tensor final_weight;  // 7 x 17
  Tensor final_bias;    // 7
  double l1_strength = 1e-3;

  static BottleneckParams init(std::size_t dim, Rng& rng) {
    BottleneckParams p;
    const double head_std = std::sqrt(1.0 / static_cast<double>(dim));
    std::vector<double> hw(kNumEgoExplanations * dim);
    for (auto& x : hw) x = rng.normal(0.0, head_std);
    p.head_weight = Tensor::from({kNumEgoExplanations, dim}, std::move(hw), true);
    p.head_bias = Tensor::zeros({kNumEgoExplanations}, true);

    const double final_std = std::sqrt(1.0 / static_cast<double>(kNumEgoExplanations));
    std::vector<double> fw(kNumManeuvers * kNumEgoExplanations);
    for (auto& x : fw) x = rng.normal(0.0, final_std);
    p.final_weight = Tensor::from({kNumManeuvers, kNumEgoExplanations},
                                  std::move(fw), true);
    p.final_bias = Tensor::zeros({kNumManeuvers}, true);
    return p;
  }
};

struct Prediction {
  Tensor per_token_expl;   // K x 17
  Tensor expl_logits;      // 17
  Tensor expl_probs;       // 17
  Tensor maneuver_logits;  // 7
  Tensor maneuver_probs;   // 7
};

// (per-token logits, late-averaged explanation logits).
inline std::pair<Tensor, Tensor> explanation_logits(const MergedTokenSet& merged,
                                                    const BottleneckParams& params) {
  if (merged.features.shape()[1] != params.head_weight.shape()[1]) {
    throw shape_error("explanation_logits: token width " +
                      std::to_string(merged.features.shape()[1]) +
                      " does not match head width " +
                      std::to_string(params.head_weight.shape()[1]));
  }
  Tensor per_token = add(matmul(merged.features, params.head_weight, false, true),
                         params.head_bias);  // K x 17
  Tensor averaged = mean(per_token, 0);      // 17
  return {per_token, averaged};
}

inline Tensor maneuver_logits(const Tensor& expl_logits,
                              const BottleneckParams& params) {
  if (expl_logits.shape() != Shape{kNumEgoExplanations}) {
    throw shape_error("maneuver_logits: expected 17 explanation logits, got " +
                      shape_str(expl_logits.shape()));
  }
  return add(matmul(params.final_weight, expl_logits), params.final_bias);
}

}  // namespace vcbm
