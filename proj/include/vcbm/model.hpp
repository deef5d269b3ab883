#pragma once

// Full pipeline: dual tubelet encoders -> fuse -> (optional) LTM merge ->
// (optionally localized) concept bottleneck -> maneuver prediction.

#include <cstdint>
#include <vector>

#include "vcbm/checkpoint.hpp"
#include "vcbm/encoder.hpp"
#include "vcbm/lcbm.hpp"
#include "vcbm/ltm.hpp"
#include "vcbm/rng.hpp"

namespace vcbm {

struct ModelConfig {
  TubeletSpec tubelet{4, 16, 16};
  std::size_t channels = 3;
  std::size_t dim_per_view = 16;
  std::size_t k = 5;
  std::size_t merge_iterations = 1;
  bool ltm_on = true;
  bool lcbm_on = true;  // localized heads; off = pool first, single head pass
  bool freeze_distance_weights = false;
  bool use_probabilities_for_f = false;
  double l1_strength = 1e-3;

  std::size_t fused_dim() const { return 2 * dim_per_view; }
};

struct VcbmModel {
  ModelConfig cfg;
  TubeletProjection gaze_proj;
  TubeletProjection front_proj;
  ClusterParams clusters;
  BottleneckParams bottleneck;

  static VcbmModel init(const ModelConfig& cfg, std::uint64_t seed) {
    VcbmModel m;
    m.cfg = cfg;
    Rng rng = Rng::derive(seed, {0x696e6974});  // init stream
    m.gaze_proj = TubeletProjection::init(cfg.tubelet, cfg.channels,
                                          cfg.dim_per_view, rng);
    m.front_proj = TubeletProjection::init(cfg.tubelet, cfg.channels,
                                           cfg.dim_per_view, rng);
    m.clusters = ClusterParams::init(cfg.k, cfg.fused_dim(), rng);
    m.bottleneck = BottleneckParams::init(cfg.fused_dim(), rng);
    m.bottleneck.l1_strength = cfg.l1_strength;
    return m;
  }

  Prediction forward(const VideoClip& gaze, const VideoClip& front) const {
    TokenSet fused = fuse_views(tubelet_embed(gaze, gaze_proj),
                                tubelet_embed(front, front_proj));
    MergedTokenSet merged;
    if (cfg.ltm_on) {
      merged = merge(fused, clusters, cfg.merge_iterations).merged;
    } else {
      merged.features = fused.features;  // all N tokens pass through
      merged.coords = Tensor::from({fused.count, 3}, fused.coords);
    }
    if (!cfg.lcbm_on) {
      // Global mean pooling before the (then single-pass) head stack.
      MergedTokenSet pooled;
      pooled.features = mean(merged.features, 0, true);
      pooled.coords = mean(merged.coords, 0, true);
      merged = pooled;
    }
    Prediction pred;
    auto [per_token, averaged] = explanation_logits(merged, bottleneck);
    pred.per_token_expl = per_token;
    pred.expl_logits = averaged;
    pred.expl_probs = sigmoid(averaged);
    Tensor f_input = cfg.use_probabilities_for_f ? pred.expl_probs : averaged;
    pred.maneuver_logits = maneuver_logits(f_input, bottleneck);
    pred.maneuver_probs = softmax(pred.maneuver_logits, 0);
    return pred;
  }

  ParamMap params() const {
    ParamMap out;
    out.emplace("encoder.gaze.weight", gaze_proj.weight);
    out.emplace("encoder.gaze.bias", gaze_proj.bias);
    out.emplace("encoder.front.weight", front_proj.weight);
    out.emplace("encoder.front.bias", front_proj.bias);
    out.emplace("ltm.centers", clusters.centers);
    out.emplace("ltm.positions", clusters.positions);
    out.emplace("ltm.weight_logits", clusters.weight_logits);
    out.emplace("lcbm.head_weight", bottleneck.head_weight);
    out.emplace("lcbm.head_bias", bottleneck.head_bias);
    out.emplace("lcbm.final_weight", bottleneck.final_weight);
    out.emplace("lcbm.final_bias", bottleneck.final_bias);
    return out;
  }

  // Parameters the optimizer steps; unused or frozen blocks are excluded.
  std::vector<Tensor> trainable() const {
    std::vector<Tensor> out = {gaze_proj.weight, gaze_proj.bias,
                               front_proj.weight, front_proj.bias};
    if (cfg.ltm_on) {
      out.push_back(clusters.centers);
      out.push_back(clusters.positions);
      if (!cfg.freeze_distance_weights) out.push_back(clusters.weight_logits);
    }
    out.push_back(bottleneck.head_weight);
    out.push_back(bottleneck.head_bias);
    out.push_back(bottleneck.final_weight);
    out.push_back(bottleneck.final_bias);
    return out;
  }

  void load_params(const ParamMap& loaded) {
    ParamMap own = params();
    for (auto& [name, tensor] : own) {
      auto it = loaded.find(name);
      if (it == loaded.end()) {
        throw data_error("load_params: missing parameter '" + name + "'");
      }
      if (it->second.shape() != tensor.shape()) {
        throw data_error("load_params: shape mismatch for '" + name + "': " +
                         shape_str(it->second.shape()) + " vs " +
                         shape_str(tensor.shape()));
      }
      // Copy into the existing node so optimizer/tape references stay valid.
      const_cast<Tensor&>(tensor).data() = it->second.data();
    }
  }
};

}  // namespace vcbm
