#pragma once

// Joint training: SGD with momentum on the sum of the maneuver cross
// entropy and the lambda-weighted explanation BCE, plus a proximal
// soft-threshold L1 step on the final explanation-to-maneuver weights.
//
// Every random decision (shuffle order, per-sample frame selection) comes
// from a stream derived from (seed, purpose, epoch, sample), so runs are
// bit-reproducible and resumable at epoch granularity.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vcbm/checkpoint.hpp"
#include "vcbm/dataset.hpp"
#include "vcbm/loss.hpp"
#include "vcbm/metrics.hpp"
#include "vcbm/model.hpp"
#include "vcbm/synth.hpp"

namespace vcbm {

// ---------------------------------------------------------------------------
// Configuration

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double lambda = 0.5;
  std::uint64_t seed = 0;
  double threshold = 0.5;  // explanation binarization
  std::size_t severity = 1;
  GazeVariant gaze_variant;  // crop:16 by default

  TubeletSpec tubelet{4, 16, 16};
  std::size_t channels = 3;
  std::size_t dim_per_view = 16;
  std::size_t k = 5;
  std::size_t merge_iterations = 1;
  bool ltm_on = true;
  bool lcbm_on = true;
  bool freeze_distance_weights = false;
  bool use_probabilities_for_f = false;
  double l1_strength = 1e-3;

  ModelConfig model_config() const {
    ModelConfig mc;
    mc.tubelet = tubelet;
    mc.channels = channels;
    mc.dim_per_view = dim_per_view;
    mc.k = k;
    mc.merge_iterations = merge_iterations;
    mc.ltm_on = ltm_on;
    mc.lcbm_on = lcbm_on;
    mc.freeze_distance_weights = freeze_distance_weights;
    mc.use_probabilities_for_f = use_probabilities_for_f;
    mc.l1_strength = l1_strength;
    return mc;
  }

  void validate() const {
    if (epochs == 0) throw data_error("config: epochs must be positive");
    if (batch_size == 0) throw data_error("config: batch_size must be positive");
    if (learning_rate <= 0.0) {
      throw data_error("config: learning_rate must be positive");
    }
    if (momentum < 0.0 || momentum >= 1.0) {
      throw data_error("config: momentum must be in [0,1)");
    }
    if (lambda < 0.0) throw data_error("config: lambda must be non-negative");
    if (threshold <= 0.0 || threshold >= 1.0) {
      throw data_error("config: threshold must be in (0,1)");
    }
    if (!valid_severity(severity)) {
      throw data_error("config: severity must be one of {1,2,4,8,16}");
    }
    if (k == 0) throw data_error("config: k must be positive");
    if (dim_per_view == 0) throw data_error("config: dim_per_view must be positive");
    if (merge_iterations == 0) {
      throw data_error("config: merge_iterations must be positive");
    }
    if (l1_strength < 0.0) {
      throw data_error("config: l1_strength must be non-negative");
    }
  }

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"epochs", epochs},
        {"batch_size", batch_size},
        {"learning_rate", learning_rate},
        {"momentum", momentum},
        {"lambda", lambda},
        {"seed", seed},
        {"threshold", threshold},
        {"severity", severity},
        {"gaze_variant", gaze_variant_name(gaze_variant)},
        {"tubelet", {tubelet.t, tubelet.h, tubelet.w}},
        {"channels", channels},
        {"dim_per_view", dim_per_view},
        {"k", k},
        {"merge_iterations", merge_iterations},
        {"ltm_on", ltm_on},
        {"lcbm_on", lcbm_on},
        {"freeze_distance_weights", freeze_distance_weights},
        {"use_probabilities_for_f", use_probabilities_for_f},
        {"l1_strength", l1_strength}};
  }

  // Starts from defaults and applies the given keys; unknown keys are
  // rejected so config typos fail before any training happens.
  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    try {
      for (const auto& [key, value] : j.items()) {
        if (key == "epochs") cfg.epochs = value.get<std::size_t>();
        else if (key == "batch_size") cfg.batch_size = value.get<std::size_t>();
        else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
        else if (key == "momentum") cfg.momentum = value.get<double>();
        else if (key == "lambda") cfg.lambda = value.get<double>();
        else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
        else if (key == "threshold") cfg.threshold = value.get<double>();
        else if (key == "severity") cfg.severity = value.get<std::size_t>();
        else if (key == "gaze_variant") {
          cfg.gaze_variant = parse_gaze_variant(value.get<std::string>());
        } else if (key == "tubelet") {
          if (!value.is_array() || value.size() != 3) {
            throw data_error("config: tubelet must be [t, h, w]");
          }
          cfg.tubelet = {value[0].get<std::size_t>(),
                         value[1].get<std::size_t>(),
                         value[2].get<std::size_t>()};
        }
        else if (key == "channels") cfg.channels = value.get<std::size_t>();
        else if (key == "dim_per_view") cfg.dim_per_view = value.get<std::size_t>();
        else if (key == "k") cfg.k = value.get<std::size_t>();
        else if (key == "merge_iterations") {
          cfg.merge_iterations = value.get<std::size_t>();
        }
        else if (key == "ltm_on") cfg.ltm_on = value.get<bool>();
        else if (key == "lcbm_on") cfg.lcbm_on = value.get<bool>();
        else if (key == "freeze_distance_weights") {
          cfg.freeze_distance_weights = value.get<bool>();
        }
        else if (key == "use_probabilities_for_f") {
          cfg.use_probabilities_for_f = value.get<bool>();
        }
        else if (key == "l1_strength") cfg.l1_strength = value.get<double>();
        else throw data_error("config: unknown key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw data_error(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// Optimizer

class SgdMomentum {
 public:
  SgdMomentum(std::vector<Tensor> params, double learning_rate, double momentum)
      : params_(std::move(params)), lr_(learning_rate), mu_(momentum) {
    velocity_.reserve(params_.size());
    for (const auto& p : params_) {
      velocity_.emplace_back(p.data().size(), 0.0);
    }
  }

  // After each step, applies soft thresholding to `target` (which must be one
  // of the stepped parameters): w <- sign(w) * max(|w| - lr * strength, 0).
  void set_prox_l1(Tensor target, double strength) {
    prox_target_ = std::move(target);
    prox_strength_ = strength;
    has_prox_ = true;
  }

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!params_[i].has_grad()) continue;
      const auto& g = params_[i].grad();
      auto& x = params_[i].data();
      auto& v = velocity_[i];
      for (std::size_t j = 0; j < x.size(); ++j) {
        v[j] = mu_ * v[j] + g[j];
        x[j] -= lr_ * v[j];
      }
    }
    if (has_prox_ && prox_strength_ > 0.0) {
      const double shrink = lr_ * prox_strength_;
      for (double& w : prox_target_.data()) {
        if (w > shrink) w -= shrink;
        else if (w < -shrink) w += shrink;
        else w = 0.0;
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  Tensor prox_target_;
  double prox_strength_ = 0.0;
  bool has_prox_ = false;
  double lr_;
  double mu_;
};

// ---------------------------------------------------------------------------
// Shared forward helpers

// Frame selection streams: training draws differ per epoch, eval draws are
// fixed per sample so repeated evaluations are identical.
inline std::vector<std::size_t> train_frame_indices(std::uint64_t seed,
                                                    std::size_t epoch,
                                                    std::size_t sample,
                                                    std::size_t t_total,
                                                    std::size_t severity) {
  Rng rng = Rng::derive(seed, {0x73657674u, epoch, sample});
  return shuffle_severity_indices(t_total, severity, rng);
}

inline std::vector<std::size_t> eval_frame_indices(std::uint64_t seed,
                                                   std::size_t sample,
                                                   std::size_t t_total,
                                                   std::size_t severity) {
  Rng rng = Rng::derive(seed, {0x65766173u, sample});
  return shuffle_severity_indices(t_total, severity, rng);
}

// Materializes the (gaze, front) input pair for one sample.
inline std::pair<VideoClip, VideoClip> prepare_views(
    const DatasetSample& sample, const std::vector<std::size_t>& frames,
    const GazeVariant& variant) {
  VideoClip front = sample.front.select_to_clip(frames);
  GazeTrajectory traj = select_trajectory(sample.trajectory, frames);
  VideoClip gaze = derive_gaze_view(front, traj, variant);
  return {std::move(gaze), std::move(front)};
}

inline std::size_t argmax_index(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalSettings {
  std::size_t severity = 1;
  GazeVariant gaze_variant;
  std::uint64_t seed = 0;
  double threshold = 0.5;

  static EvalSettings from_config(const TrainConfig& cfg) {
    EvalSettings s;
    s.severity = cfg.severity;
    s.gaze_variant = cfg.gaze_variant;
    s.seed = cfg.seed;
    s.threshold = cfg.threshold;
    return s;
  }
};

struct SamplePrediction {
  std::string sample_id;
  std::size_t maneuver_pred = 0;
  std::array<double, kNumManeuvers> maneuver_probs{};
  std::array<double, kNumEgoExplanations> expl_probs{};
};

// Runs the model over the given dataset indices. Optionally collects
// per-sample predictions and the 17-dim explanation probability vectors
// used as sample features for the embedding analysis.
inline MetricReport evaluate(const VcbmModel& model, const Dataset& ds,
                             const std::vector<std::size_t>& indices,
                             const EvalSettings& settings,
                             std::vector<SamplePrediction>* predictions = nullptr,
                             std::vector<std::vector<double>>* features = nullptr) {
  if (indices.empty()) throw data_error("evaluate: no samples selected");
  std::vector<std::size_t> action_pred, action_truth;
  std::vector<ExplanationBits> expl_pred, expl_truth;
  action_pred.reserve(indices.size());
  for (std::size_t idx : indices) {
    const DatasetSample& s = ds.samples[idx];
    const auto frames = eval_frame_indices(settings.seed, idx, s.front.t,
                                           settings.severity);
    auto [gaze, front] = prepare_views(s, frames, settings.gaze_variant);
    const Prediction pred = model.forward(gaze, front);
    const auto& probs = pred.maneuver_probs.data();
    const auto& eprob = pred.expl_probs.data();
    const std::size_t choice = argmax_index(probs);
    action_pred.push_back(choice);
    action_truth.push_back(static_cast<std::size_t>(s.record.maneuver));
    std::array<double, kNumEgoExplanations> ep{};
    for (std::size_t j = 0; j < kNumEgoExplanations; ++j) ep[j] = eprob[j];
    expl_pred.push_back(binarize(ep, settings.threshold));
    expl_truth.push_back(s.record.ego);
    if (predictions != nullptr) {
      SamplePrediction sp;
      sp.sample_id = s.record.sample_id;
      sp.maneuver_pred = choice;
      for (std::size_t m = 0; m < kNumManeuvers; ++m) {
        sp.maneuver_probs[m] = probs[m];
      }
      sp.expl_probs = ep;
      predictions->push_back(std::move(sp));
    }
    if (features != nullptr) {
      features->emplace_back(eprob.begin(), eprob.end());
    }
  }
  return compute_report(action_pred, action_truth, expl_pred, expl_truth);
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochRow {
  std::size_t epoch = 0;
  double total_loss = 0.0;  // ly + lambda * lc + l1 penalty
  double loss_ly = 0.0;
  double loss_lc = 0.0;
  double loss_l1 = 0.0;
  MetricReport train;
  MetricReport val;
};

struct TrainLog {
  std::vector<EpochRow> rows;

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
      arr.push_back(nlohmann::json{{"epoch", r.epoch},
                                   {"total_loss", r.total_loss},
                                   {"loss_ly", r.loss_ly},
                                   {"loss_lc", r.loss_lc},
                                   {"loss_l1", r.loss_l1},
                                   {"train", r.train.to_json()},
                                   {"val", r.val.to_json()}});
    }
    return arr;
  }

  void write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write train log: " + path.string());
    out.precision(17);
    out << "epoch,total_loss,loss_ly,loss_lc,loss_l1";
    for (const char* side : {"train", "val"}) {
      for (const auto& col : MetricReport::csv_columns()) {
        if (col == "n") continue;
        out << "," << side << "_" << col;
      }
    }
    out << "\n";
    for (const auto& r : rows) {
      out << r.epoch << "," << r.total_loss << "," << r.loss_ly << ","
          << r.loss_lc << "," << r.loss_l1;
      for (const MetricReport* m : {&r.train, &r.val}) {
        out << "," << m->action_accuracy << "," << m->action_f1_macro << ","
            << m->expl_subset_accuracy << "," << m->expl_f1_samples << ","
            << m->expl_f1_macro << "," << m->expl_f1_micro;
      }
      out << "\n";
    }
  }
};

struct TrainResult {
  TrainLog log;
  std::size_t best_epoch = 0;
  double best_val_accuracy = -1.0;
  double best_val_micro = -1.0;
  ParamMap best_params;
  ParamMap final_params;
};

inline ParamMap snapshot_params(const VcbmModel& model) {
  ParamMap out;
  for (const auto& [name, tensor] : model.params()) {
    out.emplace(name, Tensor::from(tensor.shape(), tensor.data()));
  }
  return out;
}

inline double l1_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += std::abs(v);
  return s;
}

// Trains in place. Epochs run from start_epoch to cfg.epochs, so resuming
// from a checkpoint taken at epoch e continues the numbering at e.
inline TrainResult train(
    VcbmModel& model, const Dataset& ds, const TrainConfig& cfg,
    std::size_t start_epoch = 0,
    const std::function<void(const EpochRow&)>& on_epoch = {}) {
  cfg.validate();
  if (start_epoch >= cfg.epochs) {
    throw data_error("train: start epoch " + std::to_string(start_epoch) +
                     " is not below configured epochs " +
                     std::to_string(cfg.epochs));
  }
  const auto train_idx = ds.split_indices(Split::kTrain);
  const auto val_idx = ds.split_indices(Split::kVal);
  if (train_idx.empty()) throw data_error("train: no training samples");
  if (val_idx.empty()) throw data_error("train: no validation samples");

  SgdMomentum opt(model.trainable(), cfg.learning_rate, cfg.momentum);
  opt.set_prox_l1(model.bottleneck.final_weight, cfg.l1_strength);

  TrainResult result;
  const EvalSettings val_settings = EvalSettings::from_config(cfg);

  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    Rng order_rng = Rng::derive(cfg.seed, {0x6f726472u, epoch});
    order_rng.shuffle(order);

    double sum_total = 0.0, sum_ly = 0.0, sum_lc = 0.0, sum_l1 = 0.0;
    std::size_t seen = 0;
    std::vector<std::size_t> action_pred, action_truth;
    std::vector<ExplanationBits> expl_pred, expl_truth;

    for (std::size_t begin = 0; begin < order.size();
         begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      const std::size_t batch_index = begin / cfg.batch_size;
      std::vector<Tensor> totals, lys, lcs;
      for (std::size_t pos = begin; pos < end; ++pos) {
        const std::size_t idx = order[pos];
        const DatasetSample& s = ds.samples[idx];
        const auto frames = train_frame_indices(cfg.seed, epoch, idx,
                                                s.front.t, cfg.severity);
        auto [gaze, front] = prepare_views(s, frames, cfg.gaze_variant);
        const Prediction pred = model.forward(gaze, front);
        LossParts parts =
            joint_loss(pred, static_cast<std::size_t>(s.record.maneuver),
                       s.record.ego, cfg.lambda);
        totals.push_back(parts.total);
        lys.push_back(parts.ly);
        lcs.push_back(parts.lc_sum);

        const auto& probs = pred.maneuver_probs.data();
        action_pred.push_back(argmax_index(probs));
        action_truth.push_back(static_cast<std::size_t>(s.record.maneuver));
        std::array<double, kNumEgoExplanations> ep{};
        for (std::size_t j = 0; j < kNumEgoExplanations; ++j) {
          ep[j] = pred.expl_probs.data()[j];
        }
        expl_pred.push_back(binarize(ep, cfg.threshold));
        expl_truth.push_back(s.record.ego);
      }

      Tensor batch_total = batch_mean(totals);
      const double ly_val = batch_mean(lys).value();
      const double lc_val = batch_mean(lcs).value();
      const double data_val = batch_total.value();
      const double l1_val = cfg.l1_strength * l1_norm(model.bottleneck.final_weight);
      const double logged_total = data_val + l1_val;

      if (std::abs(data_val - (ly_val + cfg.lambda * lc_val)) > 1e-9) {
        throw error("loss additivity violated at epoch " +
                    std::to_string(epoch) + " batch " +
                    std::to_string(batch_index));
      }
      if (!std::isfinite(logged_total)) {
        throw numeric_error("non-finite loss at epoch " +
                            std::to_string(epoch) + " batch " +
                            std::to_string(batch_index));
      }

      backward(batch_total);
      opt.step();
      opt.zero_grad();

      const double weight = static_cast<double>(end - begin);
      sum_total += weight * logged_total;
      sum_ly += weight * ly_val;
      sum_lc += weight * lc_val;
      sum_l1 += weight * l1_val;
      seen += end - begin;
    }

    EpochRow row;
    row.epoch = epoch;
    const double denom = static_cast<double>(seen);
    row.total_loss = sum_total / denom;
    row.loss_ly = sum_ly / denom;
    row.loss_lc = sum_lc / denom;
    row.loss_l1 = sum_l1 / denom;
    row.train = compute_report(action_pred, action_truth, expl_pred, expl_truth);
    row.val = evaluate(model, ds, val_idx, val_settings);

    const bool better =
        row.val.action_accuracy > result.best_val_accuracy ||
        (row.val.action_accuracy == result.best_val_accuracy &&
         row.val.expl_f1_micro > result.best_val_micro);
    if (better) {
      result.best_epoch = epoch;
      result.best_val_accuracy = row.val.action_accuracy;
      result.best_val_micro = row.val.expl_f1_micro;
      result.best_params = snapshot_params(model);
    }
    result.log.rows.push_back(std::move(row));
    if (on_epoch) on_epoch(result.log.rows.back());
  }
  result.final_params = snapshot_params(model);
  return result;
}

// ---------------------------------------------------------------------------
// Ablations

enum class AblationAxis {
  kClusters,
  kLambda,
  kSeverity,
  kGazeVariant,
  kComponents,
};

inline AblationAxis ablation_axis_from_name(const std::string& name) {
  if (name == "clusters") return AblationAxis::kClusters;
  if (name == "lambda") return AblationAxis::kLambda;
  if (name == "severity") return AblationAxis::kSeverity;
  if (name == "gaze_variant") return AblationAxis::kGazeVariant;
  if (name == "components") return AblationAxis::kComponents;
  throw data_error("unknown ablation axis '" + name +
                   "' (expected clusters, lambda, severity, gaze_variant, "
                   "or components)");
}

// Parses and applies one axis value; throws data_error on anything invalid.
// Called for every value before any training starts.
inline TrainConfig apply_ablation_value(const TrainConfig& base,
                                        AblationAxis axis,
                                        const std::string& value) {
  TrainConfig cfg = base;
  switch (axis) {
    case AblationAxis::kClusters: {
      if (value.empty() ||
          value.find_first_not_of("0123456789") != std::string::npos) {
        throw data_error("clusters value '" + value +
                         "' must be a positive integer");
      }
      const unsigned long k = std::stoul(value);
      if (k == 0) {
        throw data_error("clusters value '" + value +
                         "' must be a positive integer");
      }
      cfg.k = k;
      break;
    }
    case AblationAxis::kLambda: {
      std::size_t pos = 0;
      double l = 0.0;
      try {
        l = std::stod(value, &pos);
      } catch (const std::exception&) {
        throw data_error("lambda value '" + value + "' is not a number");
      }
      if (pos != value.size() || l < 0.0) {
        throw data_error("lambda value '" + value + "' must be >= 0");
      }
      cfg.lambda = l;
      break;
    }
    case AblationAxis::kSeverity: {
      if (value.empty() ||
          value.find_first_not_of("0123456789") != std::string::npos ||
          !valid_severity(std::stoul(value))) {
        throw data_error("severity value '" + value +
                         "' must be one of {1,2,4,8,16}");
      }
      cfg.severity = std::stoul(value);
      break;
    }
    case AblationAxis::kGazeVariant:
      cfg.gaze_variant = parse_gaze_variant(value);
      break;
    case AblationAxis::kComponents: {
      if (value == "ltm1_lcbm1") {
        cfg.ltm_on = true;
        cfg.lcbm_on = true;
      } else if (value == "ltm1_lcbm0") {
        cfg.ltm_on = true;
        cfg.lcbm_on = false;
      } else if (value == "ltm0_lcbm1") {
        cfg.ltm_on = false;
        cfg.lcbm_on = true;
      } else if (value == "ltm0_lcbm0") {
        cfg.ltm_on = false;
        cfg.lcbm_on = false;
      } else {
        throw data_error("components value '" + value +
                         "' must be one of ltm1_lcbm1, ltm1_lcbm0, "
                         "ltm0_lcbm1, ltm0_lcbm0");
      }
      break;
    }
  }
  cfg.validate();
  return cfg;
}

struct AblationRow {
  std::string value;
  std::size_t best_epoch = 0;
  MetricReport test;
};

struct AblationResult {
  std::string axis;
  std::vector<AblationRow> rows;

  void write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write ablation csv: " + path.string());
    out.precision(17);
    out << "axis,value,best_epoch,n,action_accuracy,action_f1_macro,"
           "expl_subset_accuracy,expl_f1_samples,expl_f1_macro,expl_f1_micro\n";
    for (const auto& r : rows) {
      out << axis << "," << r.value << "," << r.best_epoch << "," << r.test.n
          << "," << r.test.action_accuracy << "," << r.test.action_f1_macro
          << "," << r.test.expl_subset_accuracy << "," << r.test.expl_f1_samples
          << "," << r.test.expl_f1_macro << "," << r.test.expl_f1_micro << "\n";
    }
  }
};

// One full train + test evaluation per axis value, identical seeds. The best
// checkpoint by validation accuracy is what gets evaluated.
inline AblationResult ablate(
    const Dataset& ds, const TrainConfig& base, AblationAxis axis,
    const std::vector<std::string>& values, const std::string& axis_name,
    const std::function<void(const AblationRow&)>& on_row = {}) {
  if (values.empty()) throw data_error("ablate: no axis values given");
  std::vector<TrainConfig> configs;
  configs.reserve(values.size());
  for (const auto& v : values) {
    configs.push_back(apply_ablation_value(base, axis, v));  // validate all first
  }
  const auto test_idx = ds.split_indices(Split::kTest);
  if (test_idx.empty()) throw data_error("ablate: no test samples");

  AblationResult result;
  result.axis = axis_name;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const TrainConfig& cfg = configs[i];
    VcbmModel model = VcbmModel::init(cfg.model_config(), cfg.seed);
    TrainResult tr = train(model, ds, cfg);
    model.load_params(tr.best_params);
    AblationRow row;
    row.value = values[i];
    row.best_epoch = tr.best_epoch;
    row.test = evaluate(model, ds, test_idx, EvalSettings::from_config(cfg));
    result.rows.push_back(std::move(row));
    if (on_row) on_row(result.rows.back());
  }
  return result;
}

// ---------------------------------------------------------------------------
// Severity sweep: one fixed model evaluated under increasing shuffle severity.

inline std::vector<std::pair<std::size_t, MetricReport>> severity_sweep(
    const VcbmModel& model, const Dataset& ds, Split split,
    std::vector<std::size_t> severities, const EvalSettings& base) {
  if (severities.empty()) throw data_error("severity sweep: no severities");
  for (auto s : severities) {
    if (!valid_severity(s)) {
      throw data_error("severity sweep: invalid severity " + std::to_string(s));
    }
  }
  std::sort(severities.begin(), severities.end());
  const auto idx = ds.split_indices(split);
  if (idx.empty()) throw data_error("severity sweep: empty split");
  std::vector<std::pair<std::size_t, MetricReport>> rows;
  for (auto s : severities) {
    EvalSettings settings = base;
    settings.severity = s;
    rows.emplace_back(s, evaluate(model, ds, idx, settings));
  }
  return rows;
}

inline void write_severity_csv(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::size_t, MetricReport>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write severity csv: " + path.string());
  out.precision(17);
  out << "severity,n,action_accuracy,action_f1_macro,expl_subset_accuracy,"
         "expl_f1_samples,expl_f1_macro,expl_f1_micro\n";
  for (const auto& [s, m] : rows) {
    out << s << "," << m.n << "," << m.action_accuracy << ","
        << m.action_f1_macro << "," << m.expl_subset_accuracy << ","
        << m.expl_f1_samples << "," << m.expl_f1_macro << "," << m.expl_f1_micro
        << "\n";
  }
}

}  // namespace vcbm
