// Command-line front end: generate synthetic datasets, train, evaluate,
// run ablations, and export embeddings. Every command writes a
// run_manifest.json into its output directory recording the exact argv,
// effective configuration, and dataset checksum, so any run can be
// reproduced bit-for-bit from the manifest alone.
//
// Exit codes: 0 success (including --help/--version), 2 usage error,
// 3 data/IO error, 4 numeric error.

#include <array>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vcbm/analysis.hpp"
#include "vcbm/checkpoint.hpp"
#include "vcbm/dataset.hpp"
#include "vcbm/errors.hpp"
#include "vcbm/synth.hpp"
#include "vcbm/training.hpp"
#include "vcbm/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Small shared helpers

void ensure_out_dir(const fs::path& out, bool force) {
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) {
      throw vcbm::data_error("output path '" + out.string() +
                             "' exists and is not a directory");
    }
    if (!fs::is_empty(out) && !force) {
      throw vcbm::data_error("output directory '" + out.string() +
                             "' is not empty (pass --force to write anyway)");
    }
  } else {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) {
      throw vcbm::data_error("cannot create output directory '" +
                             out.string() + "': " + ec.message());
    }
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw vcbm::data_error("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw vcbm::data_error("invalid JSON in '" + path.string() +
                           "': " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw vcbm::data_error("cannot write '" + path.string() + "'");
  out << doc.dump(1) << "\n";
  if (!out) throw vcbm::data_error("write failed for '" + path.string() + "'");
}

std::vector<std::string> split_commas(const std::string& s, const char* what) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (const auto& tok : out) {
    if (tok.empty()) {
      throw vcbm::data_error(std::string(what) +
                             ": empty entry in list '" + s + "'");
    }
  }
  return out;
}

std::array<std::size_t, 3> parse_txhxw(const std::string& s,
                                       const char* what) {
  unsigned long long a = 0, b = 0, c = 0;
  char extra = 0;
  if (std::sscanf(s.c_str(), "%llux%llux%llu%c", &a, &b, &c, &extra) != 3 ||
      a == 0 || b == 0 || c == 0) {
    throw vcbm::data_error(std::string(what) + ": expected TxHxW, got '" + s +
                           "'");
  }
  return {static_cast<std::size_t>(a), static_cast<std::size_t>(b),
          static_cast<std::size_t>(c)};
}

// Content id for a parameter tensor: FNV-1a over its raw double bytes.
std::string tensor_id(const vcbm::Tensor& t) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto& d = t.data();
  vcbm::io_detail::fnv1a(h, reinterpret_cast<const std::uint8_t*>(d.data()),
                         d.size() * sizeof(double));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

void write_run_manifest(const fs::path& out_dir, const std::string& command,
                        const std::vector<std::string>& argv_tail,
                        std::uint64_t seed, const json& config,
                        const json& dataset_info,
                        const std::vector<std::string>& artifacts) {
  json doc{{"format", "vcbm-run-manifest"},
           {"version", vcbm::kManifestFormatVersion},
           {"tool", {{"name", vcbm::kToolName},
                     {"version", vcbm::kToolVersion}}},
           {"command", command},
           {"argv", argv_tail},
           {"seed", seed},
           {"config", config},
           {"dataset", dataset_info},
           {"artifacts", artifacts}};
  write_json_file(out_dir / "run_manifest.json", doc);
}

void print_report(const char* tag, const vcbm::MetricReport& m) {
  std::printf("%s n=%zu action_accuracy=%.4f action_f1_macro=%.4f "
              "expl_subset_accuracy=%.4f expl_f1_samples=%.4f "
              "expl_f1_macro=%.4f expl_f1_micro=%.4f\n",
              tag, m.n, m.action_accuracy, m.action_f1_macro,
              m.expl_subset_accuracy, m.expl_f1_samples, m.expl_f1_macro,
              m.expl_f1_micro);
}

// ---------------------------------------------------------------------------
// Train-config assembly: defaults (or checkpoint / --config file), then any
// flags the user actually passed on top.

struct ConfigFlags {
  CLI::Option* epochs = nullptr;
  CLI::Option* batch_size = nullptr;
  CLI::Option* learning_rate = nullptr;
  CLI::Option* momentum = nullptr;
  CLI::Option* lambda = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* threshold = nullptr;
  CLI::Option* severity = nullptr;
  CLI::Option* gaze_variant = nullptr;
  CLI::Option* tubelet = nullptr;
  CLI::Option* dim_per_view = nullptr;
  CLI::Option* k = nullptr;
  CLI::Option* merge_iterations = nullptr;
  CLI::Option* ltm_on = nullptr;
  CLI::Option* lcbm_on = nullptr;
  CLI::Option* freeze_distance_weights = nullptr;
  CLI::Option* use_probabilities_for_f = nullptr;
  CLI::Option* l1_strength = nullptr;

  std::size_t epochs_v = 0, batch_size_v = 0, severity_v = 0;
  std::size_t dim_per_view_v = 0, k_v = 0, merge_iterations_v = 0;
  double learning_rate_v = 0, momentum_v = 0, lambda_v = 0, threshold_v = 0;
  double l1_strength_v = 0;
  std::uint64_t seed_v = 0;
  std::string gaze_variant_v, tubelet_v;
  bool ltm_on_v = true, lcbm_on_v = true;
  bool freeze_distance_weights_v = false, use_probabilities_for_f_v = false;

  void add_to(CLI::App* cmd) {
    epochs = cmd->add_option("--epochs", epochs_v, "Training epochs");
    batch_size = cmd->add_option("--batch-size", batch_size_v, "Batch size");
    learning_rate =
        cmd->add_option("--learning-rate", learning_rate_v, "SGD step size");
    momentum = cmd->add_option("--momentum", momentum_v, "SGD momentum");
    lambda = cmd->add_option(
        "--lambda", lambda_v, "Weight of the explanation loss term");
    seed = cmd->add_option("--seed", seed_v, "Master random seed");
    threshold = cmd->add_option("--threshold", threshold_v,
                                "Explanation binarization threshold");
    severity = cmd->add_option("--severity", severity_v,
                               "Frame shuffle severity (1, 2, 4, 8, or 16)");
    gaze_variant = cmd->add_option(
        "--gaze-variant", gaze_variant_v,
        "Gaze view variant: none, overlaid, crop, or crop:R");
    tubelet = cmd->add_option("--tubelet", tubelet_v,
                              "Tubelet size as TxHxW (default 4x16x16)");
    dim_per_view = cmd->add_option("--dim-per-view", dim_per_view_v,
                                   "Embedding dim per view");
    k = cmd->add_option("--k", k_v, "Number of merged token clusters");
    merge_iterations = cmd->add_option("--merge-iterations",
                                       merge_iterations_v,
                                       "Token merge iterations");
    ltm_on = cmd->add_option("--ltm-on", ltm_on_v,
                             "Enable learnable token merging (true/false)");
    lcbm_on = cmd->add_option("--lcbm-on", lcbm_on_v,
                              "Enable the localized concept bottleneck");
    freeze_distance_weights =
        cmd->add_option("--freeze-distance-weights", freeze_distance_weights_v,
                        "Keep the distance mixture weights fixed");
    use_probabilities_for_f =
        cmd->add_option("--use-probabilities-for-f", use_probabilities_for_f_v,
                        "Feed concept probabilities (not logits) forward");
    l1_strength = cmd->add_option("--l1-strength", l1_strength_v,
                                  "L1 penalty on the final linear layer");
  }

  void apply(vcbm::TrainConfig& cfg) const {
    if (epochs->count()) cfg.epochs = epochs_v;
    if (batch_size->count()) cfg.batch_size = batch_size_v;
    if (learning_rate->count()) cfg.learning_rate = learning_rate_v;
    if (momentum->count()) cfg.momentum = momentum_v;
    if (lambda->count()) cfg.lambda = lambda_v;
    if (seed->count()) cfg.seed = seed_v;
    if (threshold->count()) cfg.threshold = threshold_v;
    if (severity->count()) cfg.severity = severity_v;
    if (gaze_variant->count()) {
      cfg.gaze_variant = vcbm::parse_gaze_variant(gaze_variant_v);
    }
    if (tubelet->count()) {
      const auto thw = parse_txhxw(tubelet_v, "--tubelet");
      cfg.tubelet = {thw[0], thw[1], thw[2]};
    }
    if (dim_per_view->count()) cfg.dim_per_view = dim_per_view_v;
    if (k->count()) cfg.k = k_v;
    if (merge_iterations->count()) cfg.merge_iterations = merge_iterations_v;
    if (ltm_on->count()) cfg.ltm_on = ltm_on_v;
    if (lcbm_on->count()) cfg.lcbm_on = lcbm_on_v;
    if (freeze_distance_weights->count()) {
      cfg.freeze_distance_weights = freeze_distance_weights_v;
    }
    if (use_probabilities_for_f->count()) {
      cfg.use_probabilities_for_f = use_probabilities_for_f_v;
    }
    if (l1_strength->count()) cfg.l1_strength = l1_strength_v;
  }
};

vcbm::TrainConfig resolve_config(const std::string& config_path,
                                 const ConfigFlags& flags,
                                 const json* checkpoint_config) {
  vcbm::TrainConfig cfg;
  if (checkpoint_config != nullptr) {
    cfg = vcbm::TrainConfig::from_json(*checkpoint_config);
  }
  if (!config_path.empty()) {
    cfg = vcbm::TrainConfig::from_json(read_json_file(config_path));
  }
  flags.apply(cfg);
  cfg.validate();
  return cfg;
}

// Loads a checkpoint and rebuilds the model it was saved from, using the
// training config embedded in the checkpoint to fix the architecture.
struct LoadedModel {
  vcbm::VcbmModel model;
  vcbm::TrainConfig cfg;
  vcbm::Checkpoint ck;
};

LoadedModel load_model(const std::string& checkpoint_path) {
  LoadedModel out;
  out.ck = vcbm::load_checkpoint(checkpoint_path);
  if (!out.ck.extra.contains("config")) {
    throw vcbm::data_error("checkpoint '" + checkpoint_path +
                           "' has no embedded config");
  }
  out.cfg = vcbm::TrainConfig::from_json(out.ck.extra.at("config"));
  out.model = vcbm::VcbmModel::init(out.cfg.model_config(), out.cfg.seed);
  out.model.load_params(out.ck.params);
  return out;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string out;
  std::size_t n = 700;
  std::uint64_t seed = 0;
  std::string shape = "32x64x64";
  std::string frequency_profile;
  double noise = -1.0;
  double position_jitter = -1.0;
  double intensity_jitter = -1.0;
  std::string stored_gaze;
  bool force = false;
};

void run_generate(const GenerateArgs& a,
                  const std::vector<std::string>& argv_tail) {
  vcbm::GenerationConfig cfg;
  cfg.n = a.n;
  cfg.seed = a.seed;
  const auto thw = parse_txhxw(a.shape, "--shape");
  cfg.t = thw[0];
  cfg.h = thw[1];
  cfg.w = thw[2];
  if (!a.frequency_profile.empty()) {
    const auto toks = split_commas(a.frequency_profile, "--frequency-profile");
    if (toks.size() != vcbm::kNumManeuvers) {
      throw vcbm::data_error("--frequency-profile: expected " +
                             std::to_string(vcbm::kNumManeuvers) +
                             " comma-separated values");
    }
    for (std::size_t i = 0; i < toks.size(); ++i) {
      try {
        std::size_t used = 0;
        cfg.frequency_profile[i] = std::stod(toks[i], &used);
        if (used != toks[i].size()) throw std::invalid_argument(toks[i]);
      } catch (const std::exception&) {
        throw vcbm::data_error("--frequency-profile: bad number '" + toks[i] +
                               "'");
      }
    }
  }
  if (a.noise >= 0.0) cfg.render.noise = a.noise;
  if (a.position_jitter >= 0.0) cfg.render.position_jitter = a.position_jitter;
  if (a.intensity_jitter >= 0.0) {
    cfg.render.intensity_jitter = a.intensity_jitter;
  }
  if (!a.stored_gaze.empty()) {
    cfg.stored_gaze = vcbm::parse_gaze_variant(a.stored_gaze);
  }
  cfg.validate();

  const fs::path out_dir = a.out;
  ensure_out_dir(out_dir, a.force);

  std::printf("generating %zu samples (seed %" PRIu64 ")...\n", cfg.n,
              cfg.seed);
  std::fflush(stdout);
  auto samples = vcbm::generate(cfg);

  const std::array<double, 3> ratios = {0.7, 0.2, 0.1};
  std::vector<vcbm::AnnotationRecord> records;
  records.reserve(samples.size());
  for (const auto& s : samples) records.push_back(s.record);
  vcbm::stratified_split(records, ratios, cfg.seed);
  std::array<std::size_t, 3> split_counts{};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].record.split = records[i].split;
    split_counts[static_cast<std::size_t>(records[i].split)] += 1;
  }

  vcbm::write_dataset(out_dir, samples, cfg);
  const std::string checksum = vcbm::dataset_checksum(out_dir);

  json config = vcbm::generation_config_to_json(cfg);
  config["split_ratios"] = ratios;
  write_run_manifest(out_dir, "generate", argv_tail, cfg.seed, config,
                     json{{"dir", fs::absolute(out_dir).string()},
                          {"checksum", checksum}},
                     {"manifest.jsonl", "dataset.json", "samples"});

  std::printf("wrote %zu samples to %s (train %zu / val %zu / test %zu)\n",
              samples.size(), out_dir.string().c_str(), split_counts[0],
              split_counts[1], split_counts[2]);
  std::printf("dataset checksum %s\n", checksum.c_str());
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string dataset_dir;
  std::string out;
  std::string config_path;
  std::string resume;
  bool force = false;
};

void run_train(const TrainArgs& a, const ConfigFlags& flags,
               const std::vector<std::string>& argv_tail) {
  std::optional<vcbm::Checkpoint> resume_ck;
  const json* ckpt_cfg = nullptr;
  if (!a.resume.empty()) {
    resume_ck = vcbm::load_checkpoint(a.resume);
    if (!resume_ck->extra.contains("config")) {
      throw vcbm::data_error("resume checkpoint '" + a.resume +
                             "' has no embedded config");
    }
    ckpt_cfg = &resume_ck->extra.at("config");
  }
  vcbm::TrainConfig cfg = resolve_config(a.config_path, flags, ckpt_cfg);

  const fs::path out_dir = a.out;
  ensure_out_dir(out_dir, a.force);

  std::printf("loading dataset from %s...\n", a.dataset_dir.c_str());
  std::fflush(stdout);
  const vcbm::Dataset ds = vcbm::load_dataset(a.dataset_dir);
  const std::string checksum = vcbm::dataset_checksum(a.dataset_dir);

  vcbm::VcbmModel model = vcbm::VcbmModel::init(cfg.model_config(), cfg.seed);
  std::size_t start_epoch = 0;
  if (resume_ck) {
    model.load_params(resume_ck->params);
    if (!resume_ck->extra.contains("epochs_completed")) {
      throw vcbm::data_error("resume checkpoint '" + a.resume +
                             "' has no epochs_completed field");
    }
    start_epoch = resume_ck->extra.at("epochs_completed").get<std::size_t>();
    const std::string prev =
        resume_ck->extra.value("dataset_checksum", std::string());
    if (!prev.empty() && prev != checksum) {
      throw vcbm::data_error(
          "resume checkpoint was trained on a different dataset (checksum " +
          prev + " vs " + checksum + ")");
    }
  }

  std::cout << "effective config:\n" << cfg.to_json().dump(1) << "\n";
  std::printf("training %zu samples, validating on %zu (epochs %zu..%zu)\n",
              ds.split_indices(vcbm::Split::kTrain).size(),
              ds.split_indices(vcbm::Split::kVal).size(), start_epoch,
              cfg.epochs);
  std::fflush(stdout);

  const auto progress = [](const vcbm::EpochRow& r) {
    std::printf("epoch %3zu loss %.4f train_acc %.3f val_acc %.3f "
                "val_micro %.3f\n",
                r.epoch, r.total_loss, r.train.action_accuracy,
                r.val.action_accuracy, r.val.expl_f1_micro);
    std::fflush(stdout);
  };
  vcbm::TrainResult result = vcbm::train(model, ds, cfg, start_epoch, progress);

  const json cfg_json = cfg.to_json();
  vcbm::save_checkpoint(
      (out_dir / "checkpoint_best.json").string(), result.best_params,
      json{{"config", cfg_json},
           {"epoch", result.best_epoch},
           {"epochs_completed", result.best_epoch + 1},
           {"best_epoch", result.best_epoch},
           {"dataset_checksum", checksum}});
  vcbm::save_checkpoint(
      (out_dir / "checkpoint_final.json").string(), result.final_params,
      json{{"config", cfg_json},
           {"epoch", cfg.epochs == 0 ? 0 : cfg.epochs - 1},
           {"epochs_completed", cfg.epochs},
           {"best_epoch", result.best_epoch},
           {"dataset_checksum", checksum}});
  result.log.write_csv(out_dir / "train_log.csv");
  write_json_file(out_dir / "train_log.json",
                  json{{"format", "vcbm-train-log"},
                       {"version", vcbm::kManifestFormatVersion},
                       {"best_epoch", result.best_epoch},
                       {"best_val_accuracy", result.best_val_accuracy},
                       {"best_val_micro", result.best_val_micro},
                       {"rows", result.log.to_json()}});

  write_run_manifest(out_dir, "train", argv_tail, cfg.seed, cfg_json,
                     json{{"dir", fs::absolute(a.dataset_dir).string()},
                          {"checksum", checksum}},
                     {"checkpoint_best.json", "checkpoint_final.json",
                      "train_log.csv", "train_log.json"});

  std::printf("best epoch %zu (val accuracy %.4f, val micro-F1 %.4f)\n",
              result.best_epoch, result.best_val_accuracy,
              result.best_val_micro);
  std::printf("artifacts written to %s\n", out_dir.string().c_str());
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string checkpoint;
  std::string dataset_dir;
  std::string out;
  std::string split = "test";
  bool force = false;
  CLI::Option* severity = nullptr;
  CLI::Option* gaze_variant = nullptr;
  CLI::Option* threshold = nullptr;
  CLI::Option* seed = nullptr;
  std::size_t severity_v = 0;
  std::string gaze_variant_v;
  double threshold_v = 0;
  std::uint64_t seed_v = 0;

  vcbm::EvalSettings settings(const vcbm::TrainConfig& cfg) const {
    vcbm::EvalSettings s = vcbm::EvalSettings::from_config(cfg);
    if (severity->count()) s.severity = severity_v;
    if (gaze_variant->count()) {
      s.gaze_variant = vcbm::parse_gaze_variant(gaze_variant_v);
    }
    if (threshold->count()) s.threshold = threshold_v;
    if (seed->count()) s.seed = seed_v;
    if (!vcbm::valid_severity(s.severity)) {
      throw vcbm::data_error("--severity must be one of {1,2,4,8,16}");
    }
    if (s.threshold <= 0.0 || s.threshold >= 1.0) {
      throw vcbm::data_error("--threshold must be in (0,1)");
    }
    return s;
  }

  json settings_json(const vcbm::EvalSettings& s) const {
    return json{{"split", split},
                {"severity", s.severity},
                {"gaze_variant", vcbm::gaze_variant_name(s.gaze_variant)},
                {"threshold", s.threshold},
                {"seed", s.seed}};
  }
};

void run_eval(const EvalArgs& a, const std::vector<std::string>& argv_tail) {
  LoadedModel lm = load_model(a.checkpoint);
  const vcbm::EvalSettings settings = a.settings(lm.cfg);
  const vcbm::Split split = vcbm::split_from_name(a.split);

  const fs::path out_dir = a.out;
  ensure_out_dir(out_dir, a.force);

  const vcbm::Dataset ds = vcbm::load_dataset(a.dataset_dir);
  const std::string checksum = vcbm::dataset_checksum(a.dataset_dir);
  const auto indices = ds.split_indices(split);

  std::vector<vcbm::SamplePrediction> predictions;
  const vcbm::MetricReport report =
      vcbm::evaluate(lm.model, ds, indices, settings, &predictions);

  write_json_file(out_dir / "metrics.json",
                  json{{"format", "vcbm-metrics"},
                       {"version", vcbm::kManifestFormatVersion},
                       {"settings", a.settings_json(settings)},
                       {"report", report.to_json()}});

  json preds = json::array();
  for (const auto& p : predictions) {
    preds.push_back(json{
        {"sample_id", p.sample_id},
        {"maneuver_pred",
         vcbm::maneuver_code(static_cast<vcbm::Maneuver>(p.maneuver_pred))},
        {"maneuver_probs", p.maneuver_probs},
        {"expl_probs", p.expl_probs}});
  }
  write_json_file(
      out_dir / "predictions.json",
      json{{"format", "vcbm-predictions"},
           {"version", vcbm::kManifestFormatVersion},
           {"settings", a.settings_json(settings)},
           {"final_weight_id", tensor_id(lm.model.bottleneck.final_weight)},
           {"predictions", preds}});

  json config = a.settings_json(settings);
  config["checkpoint"] = fs::absolute(a.checkpoint).string();
  config["train_config"] = lm.cfg.to_json();
  write_run_manifest(out_dir, "eval", argv_tail, settings.seed, config,
                     json{{"dir", fs::absolute(a.dataset_dir).string()},
                          {"checksum", checksum}},
                     {"metrics.json", "predictions.json"});

  print_report(a.split.c_str(), report);
}

// ---------------------------------------------------------------------------
// ablate

struct AblateArgs {
  std::string dataset_dir;
  std::string out;
  std::string config_path;
  std::string axis;
  std::string values;
  bool force = false;
};

void run_ablate(const AblateArgs& a, const ConfigFlags& flags,
                const std::vector<std::string>& argv_tail) {
  const vcbm::AblationAxis axis = vcbm::ablation_axis_from_name(a.axis);
  const auto values = split_commas(a.values, "--values");
  vcbm::TrainConfig base = resolve_config(a.config_path, flags, nullptr);

  const fs::path out_dir = a.out;
  ensure_out_dir(out_dir, a.force);

  const vcbm::Dataset ds = vcbm::load_dataset(a.dataset_dir);
  const std::string checksum = vcbm::dataset_checksum(a.dataset_dir);

  std::cout << "base config:\n" << base.to_json().dump(1) << "\n";
  std::printf("ablating %s over %zu values\n", a.axis.c_str(), values.size());
  std::fflush(stdout);

  const auto progress = [&a](const vcbm::AblationRow& r) {
    std::printf("%s=%s best_epoch %zu test_acc %.4f test_micro %.4f\n",
                a.axis.c_str(), r.value.c_str(), r.best_epoch,
                r.test.action_accuracy, r.test.expl_f1_micro);
    std::fflush(stdout);
  };
  const vcbm::AblationResult result =
      vcbm::ablate(ds, base, axis, values, a.axis, progress);

  result.write_csv(out_dir / "ablation.csv");
  json rows = json::array();
  for (const auto& r : result.rows) {
    rows.push_back(json{{"value", r.value},
                        {"best_epoch", r.best_epoch},
                        {"test", r.test.to_json()}});
  }
  write_json_file(out_dir / "ablation.json",
                  json{{"format", "vcbm-ablation"},
                       {"version", vcbm::kManifestFormatVersion},
                       {"axis", a.axis},
                       {"rows", rows}});

  json config = base.to_json();
  config["axis"] = a.axis;
  config["values"] = values;
  write_run_manifest(out_dir, "ablate", argv_tail, base.seed, config,
                     json{{"dir", fs::absolute(a.dataset_dir).string()},
                          {"checksum", checksum}},
                     {"ablation.csv", "ablation.json"});
  std::printf("artifacts written to %s\n", out_dir.string().c_str());
}

// ---------------------------------------------------------------------------
// export-tsne

struct TsneArgs {
  std::string checkpoint;
  std::string dataset_dir;
  std::string out;
  std::string split = "test";
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  bool force = false;
  CLI::Option* severity = nullptr;
  CLI::Option* gaze_variant = nullptr;
  std::size_t severity_v = 0;
  std::string gaze_variant_v;
};

void run_tsne(const TsneArgs& a, const std::vector<std::string>& argv_tail) {
  LoadedModel lm = load_model(a.checkpoint);
  vcbm::EvalSettings settings = vcbm::EvalSettings::from_config(lm.cfg);
  if (a.severity->count()) settings.severity = a.severity_v;
  if (a.gaze_variant->count()) {
    settings.gaze_variant = vcbm::parse_gaze_variant(a.gaze_variant_v);
  }
  if (!vcbm::valid_severity(settings.severity)) {
    throw vcbm::data_error("--severity must be one of {1,2,4,8,16}");
  }
  const vcbm::Split split = vcbm::split_from_name(a.split);

  const fs::path out_dir = a.out;
  ensure_out_dir(out_dir, a.force);

  const vcbm::Dataset ds = vcbm::load_dataset(a.dataset_dir);
  const std::string checksum = vcbm::dataset_checksum(a.dataset_dir);
  const auto indices = ds.split_indices(split);

  std::vector<vcbm::SamplePrediction> predictions;
  std::vector<std::vector<double>> features;
  vcbm::evaluate(lm.model, ds, indices, settings, &predictions, &features);

  std::vector<vcbm::ExplanationBits> bits;
  std::vector<std::string> ids;
  std::vector<vcbm::Maneuver> maneuvers;
  for (std::size_t idx : indices) {
    bits.push_back(ds.samples[idx].record.ego);
    ids.push_back(ds.samples[idx].record.sample_id);
    maneuvers.push_back(ds.samples[idx].record.maneuver);
  }

  vcbm::TsneConfig tc;
  tc.perplexity = a.perplexity;
  tc.iterations = a.iterations;
  tc.seed = a.seed;
  vcbm::TsneResult tres;
  const auto rows =
      vcbm::embed_with_anchors(features, bits, ids, maneuvers, tc, &tres);
  vcbm::write_embedding_csv(out_dir / "embedding.csv", rows);

  std::size_t anchor_rows = 0;
  for (const auto& r : rows) {
    if (r.kind == "anchor") anchor_rows += 1;
  }
  write_json_file(out_dir / "tsne.json",
                  json{{"format", "vcbm-tsne"},
                       {"version", vcbm::kManifestFormatVersion},
                       {"split", a.split},
                       {"perplexity", tc.perplexity},
                       {"iterations", tc.iterations},
                       {"tsne_seed", tc.seed},
                       {"jittered", tres.jittered},
                       {"kl_checkpoints", tres.kl_checkpoints}});

  json config{{"split", a.split},
              {"perplexity", tc.perplexity},
              {"iterations", tc.iterations},
              {"tsne_seed", tc.seed},
              {"severity", settings.severity},
              {"gaze_variant", vcbm::gaze_variant_name(settings.gaze_variant)},
              {"checkpoint", fs::absolute(a.checkpoint).string()},
              {"train_config", lm.cfg.to_json()}};
  write_run_manifest(out_dir, "export-tsne", argv_tail, a.seed, config,
                     json{{"dir", fs::absolute(a.dataset_dir).string()},
                          {"checksum", checksum}},
                     {"embedding.csv", "tsne.json"});

  std::printf("embedded %zu samples and %zu anchors", indices.size(),
              anchor_rows);
  if (!tres.kl_checkpoints.empty()) {
    std::printf(" (final KL %.6f)", tres.kl_checkpoints.back());
  }
  std::printf("\n");
  if (tres.jittered) {
    std::printf("note: duplicate feature vectors were jittered\n");
  }
  std::printf("artifacts written to %s\n", out_dir.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video concept bottleneck toolkit: synthetic desk-scale "
               "driving clips, joint action/explanation training, and "
               "analysis exports"};
  app.set_version_flag("--version", std::string(vcbm::kToolName) + " " +
                                        vcbm::kToolVersion);
  app.require_subcommand(1);
  const std::vector<std::string> argv_tail(argv + 1, argv + argc);

  GenerateArgs gen;
  CLI::App* cmd_gen =
      app.add_subcommand("generate", "Generate a synthetic dataset");
  cmd_gen->add_option("--out", gen.out, "Output dataset directory")
      ->required();
  cmd_gen->add_option("--n", gen.n, "Number of samples")
      ->capture_default_str();
  cmd_gen->add_option("--seed", gen.seed, "Generation seed")
      ->capture_default_str();
  cmd_gen->add_option("--shape", gen.shape, "Clip shape as TxHxW")
      ->capture_default_str();
  cmd_gen->add_option("--frequency-profile", gen.frequency_profile,
                      "Seven comma-separated maneuver probabilities "
                      "(ST,RT,LT,RLC,LLC,SS,UT)");
  cmd_gen->add_option("--noise", gen.noise, "Additive pixel noise sigma");
  cmd_gen->add_option("--position-jitter", gen.position_jitter,
                      "Glyph position jitter in pixels");
  cmd_gen->add_option("--intensity-jitter", gen.intensity_jitter,
                      "Glyph intensity jitter");
  cmd_gen->add_option("--stored-gaze", gen.stored_gaze,
                      "Gaze variant baked into stored gaze clips");
  cmd_gen->add_flag("--force", gen.force, "Write into a non-empty directory");

  TrainArgs tr;
  ConfigFlags tr_flags;
  CLI::App* cmd_train = app.add_subcommand("train", "Train a model");
  cmd_train->add_option("--dataset-dir", tr.dataset_dir, "Dataset directory")
      ->envname("VCBM_DATASET_DIR")
      ->required();
  cmd_train->add_option("--out", tr.out, "Output directory")->required();
  cmd_train->add_option("--config", tr.config_path,
                        "JSON config file (flags override it)");
  cmd_train->add_option("--resume", tr.resume,
                        "Checkpoint to resume from; its embedded config is "
                        "the base and --config/flags override it");
  cmd_train->add_flag("--force", tr.force,
                      "Write into a non-empty directory");
  tr_flags.add_to(cmd_train);

  EvalArgs ev;
  CLI::App* cmd_eval =
      app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  cmd_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")
      ->required();
  cmd_eval->add_option("--dataset-dir", ev.dataset_dir, "Dataset directory")
      ->envname("VCBM_DATASET_DIR")
      ->required();
  cmd_eval->add_option("--out", ev.out, "Output directory")->required();
  cmd_eval->add_option("--split", ev.split, "train, val, or test")
      ->capture_default_str();
  ev.severity = cmd_eval->add_option("--severity", ev.severity_v,
                                     "Override shuffle severity");
  ev.gaze_variant = cmd_eval->add_option("--gaze-variant", ev.gaze_variant_v,
                                         "Override gaze variant");
  ev.threshold = cmd_eval->add_option("--threshold", ev.threshold_v,
                                      "Override binarization threshold");
  ev.seed = cmd_eval->add_option("--seed", ev.seed_v,
                                 "Override evaluation frame-selection seed");
  cmd_eval->add_flag("--force", ev.force, "Write into a non-empty directory");

  AblateArgs ab;
  ConfigFlags ab_flags;
  CLI::App* cmd_ablate = app.add_subcommand(
      "ablate", "Train once per axis value and report test metrics");
  cmd_ablate->add_option("--dataset-dir", ab.dataset_dir, "Dataset directory")
      ->envname("VCBM_DATASET_DIR")
      ->required();
  cmd_ablate->add_option("--out", ab.out, "Output directory")->required();
  cmd_ablate
      ->add_option("--axis", ab.axis,
                   "clusters, lambda, severity, gaze_variant, or components")
      ->required();
  cmd_ablate
      ->add_option("--values", ab.values, "Comma-separated axis values")
      ->required();
  cmd_ablate->add_option("--config", ab.config_path,
                         "JSON config file (flags override it)");
  cmd_ablate->add_flag("--force", ab.force,
                       "Write into a non-empty directory");
  ab_flags.add_to(cmd_ablate);

  TsneArgs ts;
  CLI::App* cmd_tsne = app.add_subcommand(
      "export-tsne", "Embed explanation probabilities with label anchors");
  cmd_tsne->add_option("--checkpoint", ts.checkpoint, "Checkpoint file")
      ->required();
  cmd_tsne->add_option("--dataset-dir", ts.dataset_dir, "Dataset directory")
      ->envname("VCBM_DATASET_DIR")
      ->required();
  cmd_tsne->add_option("--out", ts.out, "Output directory")->required();
  cmd_tsne->add_option("--split", ts.split, "train, val, or test")
      ->capture_default_str();
  cmd_tsne->add_option("--perplexity", ts.perplexity, "t-SNE perplexity")
      ->capture_default_str();
  cmd_tsne->add_option("--iterations", ts.iterations, "t-SNE iterations")
      ->capture_default_str();
  cmd_tsne->add_option("--seed", ts.seed, "t-SNE init seed")
      ->capture_default_str();
  ts.severity = cmd_tsne->add_option("--severity", ts.severity_v,
                                     "Override shuffle severity");
  ts.gaze_variant = cmd_tsne->add_option("--gaze-variant", ts.gaze_variant_v,
                                         "Override gaze variant");
  cmd_tsne->add_flag("--force", ts.force, "Write into a non-empty directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(cmd_gen)) run_generate(gen, argv_tail);
    else if (app.got_subcommand(cmd_train)) run_train(tr, tr_flags, argv_tail);
    else if (app.got_subcommand(cmd_eval)) run_eval(ev, argv_tail);
    else if (app.got_subcommand(cmd_ablate)) {
      run_ablate(ab, ab_flags, argv_tail);
    } else if (app.got_subcommand(cmd_tsne)) {
      run_tsne(ts, argv_tail);
    }
  } catch (const vcbm::numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const vcbm::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
