#pragma once

// Classification metrics for the maneuver head (multiclass) and the
// explanation head (multilabel).
//
// Multiclass macro F1 averages over the classes observed in truth or
// predictions; multilabel macro F1 averages over all 17 explanation labels
// with the 0-convention for labels that never occur. Micro F1 pools
// TP/FP/FN over every (sample, label) cell.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcbm/errors.hpp"
#include "vcbm/labels.hpp"

namespace vcbm {

struct MulticlassMetrics {
  double accuracy = 0.0;
  double f1_macro = 0.0;
};

inline MulticlassMetrics multiclass_metrics(
    const std::vector<std::size_t>& pred, const std::vector<std::size_t>& truth,
    std::size_t num_classes = kNumManeuvers) {
  if (pred.empty()) throw data_error("multiclass metrics: empty input");
  if (pred.size() != truth.size()) {
    throw data_error("multiclass metrics: size mismatch");
  }
  std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0),
      fn(num_classes, 0);
  std::vector<bool> observed(num_classes, false);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= num_classes || truth[i] >= num_classes) {
      throw data_error("multiclass metrics: label out of range");
    }
    observed[pred[i]] = true;
    observed[truth[i]] = true;
    if (pred[i] == truth[i]) {
      ++correct;
      ++tp[truth[i]];
    } else {
      ++fp[pred[i]];
      ++fn[truth[i]];
    }
  }
  MulticlassMetrics out;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  double f1_sum = 0.0;
  std::size_t observed_count = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (!observed[c]) continue;
    ++observed_count;
    const double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    f1_sum += denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
  }
  out.f1_macro = f1_sum / static_cast<double>(observed_count);
  return out;
}

struct MultilabelMetrics {
  double subset_accuracy = 0.0;
  double f1_samples = 0.0;
  double f1_macro = 0.0;
  double f1_micro = 0.0;
};

// Predictions arrive as probabilities; >= threshold counts as positive.
inline ExplanationBits binarize(const std::array<double, kNumEgoExplanations>& probs,
                                double threshold) {
  ExplanationBits bits{};
  for (std::size_t j = 0; j < kNumEgoExplanations; ++j) {
    bits[j] = probs[j] >= threshold ? 1 : 0;
  }
  return bits;
}

inline MultilabelMetrics multilabel_metrics(
    const std::vector<ExplanationBits>& pred,
    const std::vector<ExplanationBits>& truth) {
  if (pred.empty()) throw data_error("multilabel metrics: empty input");
  if (pred.size() != truth.size()) {
    throw data_error("multilabel metrics: size mismatch");
  }
  constexpr std::size_t L = kNumEgoExplanations;
  std::array<std::size_t, L> tp{}, fp{}, fn{};
  std::size_t exact = 0;
  double samples_sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::size_t inter = 0, np = 0, nt = 0;
    bool all_match = true;
    for (std::size_t j = 0; j < L; ++j) {
      const bool p = pred[i][j] != 0, t = truth[i][j] != 0;
      if (p != t) all_match = false;
      if (p && t) {
        ++inter;
        ++tp[j];
      } else if (p) {
        ++fp[j];
      } else if (t) {
        ++fn[j];
      }
      np += p ? 1 : 0;
      nt += t ? 1 : 0;
    }
    exact += all_match ? 1 : 0;
    samples_sum += (np + nt == 0)
                       ? 1.0
                       : 2.0 * static_cast<double>(inter) /
                             static_cast<double>(np + nt);
  }
  MultilabelMetrics out;
  const double n = static_cast<double>(pred.size());
  out.subset_accuracy = static_cast<double>(exact) / n;
  out.f1_samples = samples_sum / n;
  double macro_sum = 0.0;
  std::size_t tp_all = 0, fp_all = 0, fn_all = 0;
  for (std::size_t j = 0; j < L; ++j) {
    const double denom = static_cast<double>(2 * tp[j] + fp[j] + fn[j]);
    macro_sum += denom > 0.0 ? 2.0 * static_cast<double>(tp[j]) / denom : 0.0;
    tp_all += tp[j];
    fp_all += fp[j];
    fn_all += fn[j];
  }
  out.f1_macro = macro_sum / static_cast<double>(L);
  const double micro_denom = static_cast<double>(2 * tp_all + fp_all + fn_all);
  out.f1_micro =
      micro_denom > 0.0 ? 2.0 * static_cast<double>(tp_all) / micro_denom : 1.0;
  return out;
}

// Combined report in the column order of the results tables.
struct MetricReport {
  std::size_t n = 0;
  double action_accuracy = 0.0;
  double action_f1_macro = 0.0;
  double expl_subset_accuracy = 0.0;
  double expl_f1_samples = 0.0;
  double expl_f1_macro = 0.0;
  double expl_f1_micro = 0.0;

  nlohmann::json to_json() const {
    return nlohmann::json{{"n", n},
                          {"action_accuracy", action_accuracy},
                          {"action_f1_macro", action_f1_macro},
                          {"expl_subset_accuracy", expl_subset_accuracy},
                          {"expl_f1_samples", expl_f1_samples},
                          {"expl_f1_macro", expl_f1_macro},
                          {"expl_f1_micro", expl_f1_micro}};
  }

  static const std::vector<std::string>& csv_columns() {
    static const std::vector<std::string> cols = {
        "n",          "action_accuracy",      "action_f1_macro",
        "expl_subset_accuracy", "expl_f1_samples", "expl_f1_macro",
        "expl_f1_micro"};
    return cols;
  }
};

inline MetricReport compute_report(const std::vector<std::size_t>& action_pred,
                                   const std::vector<std::size_t>& action_truth,
                                   const std::vector<ExplanationBits>& expl_pred,
                                   const std::vector<ExplanationBits>& expl_truth) {
  if (action_pred.size() != expl_pred.size()) {
    throw data_error("metric report: action/explanation count mismatch");
  }
  const auto mc = multiclass_metrics(action_pred, action_truth);
  const auto ml = multilabel_metrics(expl_pred, expl_truth);
  MetricReport r;
  r.n = action_pred.size();
  r.action_accuracy = mc.accuracy;
  r.action_f1_macro = mc.f1_macro;
  r.expl_subset_accuracy = ml.subset_accuracy;
  r.expl_f1_samples = ml.f1_samples;
  r.expl_f1_macro = ml.f1_macro;
  r.expl_f1_micro = ml.f1_micro;
  return r;
}

}  // namespace vcbm
