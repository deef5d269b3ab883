#pragma once

// Joint objective: multiclass cross entropy on the maneuver plus
// lambda-weighted sum of per-explanation binary cross entropies.
// BCE is built as softplus(l) - e*l, which equals
// -[e log(sigma(l)) + (1-e) log(1-sigma(l))] but never evaluates log(0);
// zero logits give exactly ln 2 per explanation.

#include <array>
#include <cstdint>
#include <vector>

#include "vcbm/errors.hpp"
#include "vcbm/labels.hpp"
#include "vcbm/lcbm.hpp"
#include "vcbm/tensor.hpp"

namespace vcbm {

struct LossParts {
  Tensor total;   // shape {1}
  Tensor ly;      // shape {1}
  Tensor lc_sum;  // shape {1}
};

inline LossParts joint_loss(const Prediction& pred, std::size_t y,
                            const ExplanationBits& e, double lambda) {
  if (y >= kNumManeuvers) {
    throw data_error("joint_loss: maneuver label " + std::to_string(y) +
                     " out of range [0," + std::to_string(kNumManeuvers) + ")");
  }
  if (lambda < 0.0) {
    throw data_error("joint_loss: lambda must be non-negative");
  }
  std::vector<double> ev(kNumEgoExplanations);
  for (std::size_t j = 0; j < kNumEgoExplanations; ++j) {
    if (e[j] > 1) {
      throw data_error("joint_loss: explanation bit " + std::to_string(j) +
                       " is not 0/1");
    }
    ev[j] = static_cast<double>(e[j]);
  }

  Tensor probs = softmax(pred.maneuver_logits, 0);
  Tensor ly = negate(log(gather(probs, 0, {y})));  // {1}

  const Tensor& l = pred.expl_logits;  // 17
  Tensor softplus = log(add(exp(l), Tensor::ones({kNumEgoExplanations})));
  Tensor el = mul_elementwise(Tensor::from({kNumEgoExplanations}, std::move(ev)), l);
  Tensor lc = sub(sum(softplus, 0, true), sum(el, 0, true));  // {1}

  LossParts parts;
  parts.ly = ly;
  parts.lc_sum = lc;
  parts.total = add(ly, scalar_mul(lc, lambda));
  return parts;
}

// Mean over per-sample scalar losses ({1} tensors) -> true scalar.
inline Tensor batch_mean(const std::vector<Tensor>& sample_losses) {
  if (sample_losses.empty()) throw data_error("batch_mean: empty batch");
  return mean(concat(sample_losses, 0), 0);
}

}  // namespace vcbm
