#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vcbm/training.hpp"

using namespace vcbm;
namespace fs = std::filesystem;

namespace {

// Small in-memory dataset: 32x32 frames, 16 stored frames, so severity 1 is
// the identity selection and the model stays cheap.
Dataset tiny_dataset(std::size_t n, std::uint64_t seed) {
  GenerationConfig gc;
  gc.n = n;
  gc.seed = seed;
  gc.t = 16;
  gc.h = 32;
  gc.w = 32;
  auto samples = generate(gc);
  std::vector<AnnotationRecord> records;
  for (const auto& s : samples) records.push_back(s.record);
  stratified_split(records, {0.7, 0.2, 0.1}, seed);
  Dataset ds;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    DatasetSample d;
    d.record = records[i];
    d.front = StoredClip::from_clip(samples[i].front);
    d.trajectory = samples[i].trajectory;
    ds.samples.push_back(std::move(d));
  }
  return ds;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.dim_per_view = 8;
  cfg.k = 3;
  cfg.epochs = 10;
  cfg.batch_size = 8;
  cfg.gaze_variant.radius = 8.0;  // 32x32 frames
  return cfg;
}

}  // namespace

TEST_CASE("train config json round trip and validation") {
  TrainConfig cfg = tiny_config();
  cfg.lambda = 0.25;
  cfg.severity = 4;
  cfg.gaze_variant = parse_gaze_variant("overlaid");
  auto j = cfg.to_json();
  TrainConfig back = TrainConfig::from_json(j);
  CHECK(back.lambda == 0.25);
  CHECK(back.severity == 4);
  CHECK(back.dim_per_view == 8);
  CHECK(back.gaze_variant.kind == GazeVariantKind::kOverlaid);
  CHECK(back.to_json() == j);

  SECTION("partial json keeps defaults") {
    TrainConfig partial = TrainConfig::from_json({{"lambda", 0.1}});
    CHECK(partial.lambda == 0.1);
    CHECK(partial.epochs == 50);
    CHECK(partial.k == 5);
  }

  SECTION("unknown keys are rejected") {
    CHECK_THROWS_WITH(TrainConfig::from_json({{"lamda", 0.1}}),
                      Catch::Matchers::ContainsSubstring("unknown key"));
  }

  SECTION("invalid values are rejected") {
    CHECK_THROWS_AS(TrainConfig::from_json({{"severity", 3}}), data_error);
    CHECK_THROWS_AS(TrainConfig::from_json({{"lambda", -1.0}}), data_error);
    CHECK_THROWS_AS(TrainConfig::from_json({{"epochs", 0}}), data_error);
    CHECK_THROWS_AS(TrainConfig::from_json({{"momentum", 1.0}}), data_error);
    CHECK_THROWS_AS(TrainConfig::from_json({{"threshold", 0.0}}), data_error);
  }
}

TEST_CASE("sgd momentum hand oracle") {
  Tensor w = Tensor::from({2}, {1.0, 2.0}, true);
  SgdMomentum opt({w}, 0.1, 0.9);
  auto loss_of = [&] { return sum(mul_elementwise(w, w), 0); };

  Tensor l1 = loss_of();
  backward(l1);  // grad = 2w = [2, 4]
  opt.step();
  opt.zero_grad();
  CHECK(w.data()[0] == Catch::Approx(0.8).margin(1e-15));
  CHECK(w.data()[1] == Catch::Approx(1.6).margin(1e-15));

  Tensor l2 = loss_of();
  backward(l2);  // grad = [1.6, 3.2]; velocity = 0.9*[2,4] + [1.6,3.2]
  opt.step();
  CHECK(w.data()[0] == Catch::Approx(0.46).margin(1e-15));
  CHECK(w.data()[1] == Catch::Approx(0.92).margin(1e-15));
}

TEST_CASE("proximal step soft-thresholds the target weights") {
  Tensor w = Tensor::from({3}, {0.5, -0.003, 0.0005}, true);
  SgdMomentum opt({w}, 0.1, 0.9);
  opt.set_prox_l1(w, 1.0);  // shrink = lr * strength = 0.1
  opt.step();               // no grads: only the prox applies
  CHECK(w.data()[0] == Catch::Approx(0.4).margin(1e-15));
  CHECK(w.data()[1] == 0.0);
  CHECK(w.data()[2] == 0.0);
}

TEST_CASE("training reduces the loss and logs additive parts") {
  Dataset ds = tiny_dataset(120, 5);
  TrainConfig cfg = tiny_config();
  VcbmModel model = VcbmModel::init(cfg.model_config(), cfg.seed);
  TrainResult result = train(model, ds, cfg);
  REQUIRE(result.log.rows.size() == 10);

  SECTION("per-epoch loss identity holds") {
    for (const auto& row : result.log.rows) {
      const double recon =
          row.loss_ly + cfg.lambda * row.loss_lc + row.loss_l1;
      CHECK(std::abs(row.total_loss - recon) <= 1e-9);
    }
  }

  SECTION("loss trends down over the first epochs") {
    const auto& rows = result.log.rows;
    CHECK(rows.back().total_loss < rows.front().total_loss);
    std::size_t improved = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].total_loss < rows[i - 1].total_loss) ++improved;
    }
    CHECK(improved >= 7);  // momentum SGD may flutter occasionally
  }

  SECTION("best epoch matches a recomputation from the log") {
    std::size_t best = 0;
    double best_acc = -1.0, best_micro = -1.0;
    for (const auto& row : result.log.rows) {
      if (row.val.action_accuracy > best_acc ||
          (row.val.action_accuracy == best_acc &&
           row.val.expl_f1_micro > best_micro)) {
        best = row.epoch;
        best_acc = row.val.action_accuracy;
        best_micro = row.val.expl_f1_micro;
      }
    }
    CHECK(result.best_epoch == best);
    CHECK(result.best_val_accuracy == best_acc);
    REQUIRE(result.best_params.count("lcbm.final_weight") == 1);
  }

  SECTION("log serializes to csv and json") {
    const fs::path csv = fs::temp_directory_path() / "vcbm_trainlog.csv";
    result.log.write_csv(csv);
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header.rfind("epoch,total_loss,loss_ly,loss_lc,loss_l1,train_", 0) ==
          0);
    std::size_t lines = 0;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) ++lines;
    }
    CHECK(lines == 10);
    CHECK(result.log.to_json().size() == 10);
  }
}

TEST_CASE("training is bit-deterministic") {
  Dataset ds = tiny_dataset(60, 11);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;

  VcbmModel m1 = VcbmModel::init(cfg.model_config(), cfg.seed);
  TrainResult r1 = train(m1, ds, cfg);
  VcbmModel m2 = VcbmModel::init(cfg.model_config(), cfg.seed);
  TrainResult r2 = train(m2, ds, cfg);

  REQUIRE(r1.log.rows.size() == r2.log.rows.size());
  for (std::size_t i = 0; i < r1.log.rows.size(); ++i) {
    CHECK(r1.log.rows[i].total_loss == r2.log.rows[i].total_loss);
    CHECK(r1.log.rows[i].val.action_accuracy ==
          r2.log.rows[i].val.action_accuracy);
  }
  for (const auto& [name, tensor] : r1.final_params) {
    CHECK(tensor.data() == r2.final_params.at(name).data());
  }
}

TEST_CASE("lambda zero trains on the action loss alone") {
  Dataset ds = tiny_dataset(40, 2);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;
  cfg.lambda = 0.0;
  VcbmModel model = VcbmModel::init(cfg.model_config(), cfg.seed);
  TrainResult result = train(model, ds, cfg);
  for (const auto& row : result.log.rows) {
    CHECK(std::abs(row.total_loss - (row.loss_ly + row.loss_l1)) <= 1e-9);
    CHECK(row.loss_lc > 0.0);  // still measured, just unweighted
  }
}

TEST_CASE("non-finite parameters abort with epoch and batch context") {
  Dataset ds = tiny_dataset(40, 3);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  VcbmModel model = VcbmModel::init(cfg.model_config(), cfg.seed);
  model.bottleneck.final_bias.data()[0] =
      std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH(train(model, ds, cfg),
                    Catch::Matchers::ContainsSubstring("epoch 0") &&
                        Catch::Matchers::ContainsSubstring("batch 0"));
}

TEST_CASE("resume continues the epoch numbering") {
  Dataset ds = tiny_dataset(60, 7);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 6;

  VcbmModel model = VcbmModel::init(cfg.model_config(), cfg.seed);
  TrainConfig first_half = cfg;
  first_half.epochs = 3;
  TrainResult part1 = train(model, ds, first_half);
  CHECK(part1.log.rows.back().epoch == 2);

  TrainResult part2 = train(model, ds, cfg, 3);
  REQUIRE(part2.log.rows.size() == 3);
  CHECK(part2.log.rows.front().epoch == 3);
  CHECK(part2.log.rows.back().epoch == 5);

  CHECK_THROWS_AS(train(model, ds, cfg, 6), data_error);
}

TEST_CASE("converged run scores train at least as well as validation") {
  Dataset ds = tiny_dataset(120, 5);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 30;
  VcbmModel model = VcbmModel::init(cfg.model_config(), cfg.seed);
  TrainResult result = train(model, ds, cfg);
  model.load_params(result.best_params);

  EvalSettings settings = EvalSettings::from_config(cfg);
  auto train_report = evaluate(model, ds, ds.split_indices(Split::kTrain),
                               settings);
  auto val_report = evaluate(model, ds, ds.split_indices(Split::kVal),
                             settings);
  INFO("train acc " << train_report.action_accuracy << " val acc "
                    << val_report.action_accuracy);
  CHECK(train_report.action_accuracy >= val_report.action_accuracy);
  CHECK(train_report.action_accuracy > 0.85);

  SECTION("evaluation is deterministic and supports prediction export") {
    std::vector<SamplePrediction> preds;
    std::vector<std::vector<double>> feats;
    auto again = evaluate(model, ds, ds.split_indices(Split::kVal), settings,
                          &preds, &feats);
    CHECK(again.action_accuracy == val_report.action_accuracy);
    CHECK(preds.size() == ds.split_indices(Split::kVal).size());
    CHECK(feats.size() == preds.size());
    CHECK(feats[0].size() == kNumEgoExplanations);
    double psum = 0.0;
    for (double p : preds[0].maneuver_probs) psum += p;
    CHECK(psum == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("ablation values are validated before any training") {
  Dataset ds = tiny_dataset(20, 1);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  CHECK_THROWS_AS(ablate(ds, cfg, AblationAxis::kSeverity, {"1", "3"},
                         "severity"),
                  data_error);
  CHECK_THROWS_AS(ablate(ds, cfg, AblationAxis::kClusters, {"abc"}, "clusters"),
                  data_error);
  CHECK_THROWS_AS(ablate(ds, cfg, AblationAxis::kClusters, {"-3"}, "clusters"),
                  data_error);
  CHECK_THROWS_AS(ablate(ds, cfg, AblationAxis::kLambda, {"-0.5"}, "lambda"),
                  data_error);
  CHECK_THROWS_AS(ablate(ds, cfg, AblationAxis::kComponents, {"both"},
                         "components"),
                  data_error);
  CHECK_THROWS_AS(ablate(ds, cfg, AblationAxis::kGazeVariant, {"blur"},
                         "gaze_variant"),
                  data_error);
  CHECK_THROWS_AS(ablation_axis_from_name("nonsense"), data_error);
  CHECK(ablation_axis_from_name("clusters") == AblationAxis::kClusters);
}

TEST_CASE("component ablation trains all four topologies") {
  Dataset ds = tiny_dataset(40, 9);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;
  auto result = ablate(
      ds, cfg, AblationAxis::kComponents,
      {"ltm1_lcbm1", "ltm1_lcbm0", "ltm0_lcbm1", "ltm0_lcbm0"}, "components");
  REQUIRE(result.rows.size() == 4);
  const std::size_t test_n = ds.split_indices(Split::kTest).size();
  for (const auto& row : result.rows) {
    CHECK(row.test.n == test_n);
    CHECK(row.test.action_accuracy >= 0.0);
    CHECK(row.test.action_accuracy <= 1.0);
  }
  const fs::path csv = fs::temp_directory_path() / "vcbm_ablation.csv";
  result.write_csv(csv);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "axis,value,best_epoch,n,action_accuracy,action_f1_macro,"
        "expl_subset_accuracy,expl_f1_samples,expl_f1_macro,expl_f1_micro");
}

TEST_CASE("severity sweep on constant video is invariant") {
  // Every frame identical: frame selection cannot matter, so the metrics
  // must agree bitwise across severities.
  GenerationConfig gc;
  gc.n = 12;
  gc.seed = 4;
  gc.t = 16;
  gc.h = 32;
  gc.w = 32;
  auto samples = generate(gc);
  Dataset ds;
  for (auto& s : samples) {
    VideoClip constant = s.front;
    const std::size_t fs = constant.h * constant.w * constant.c;
    for (std::size_t t = 1; t < constant.t; ++t) {
      std::copy_n(constant.voxels.begin(), fs,
                  constant.voxels.begin() + t * fs);
    }
    GazeTrajectory flat(constant.t, s.trajectory[0]);
    DatasetSample d;
    d.record = s.record;
    d.record.split = Split::kTest;
    d.front = StoredClip::from_clip(constant);
    d.trajectory = flat;
    ds.samples.push_back(std::move(d));
  }

  TrainConfig cfg = tiny_config();
  VcbmModel model = VcbmModel::init(cfg.model_config(), 17);
  EvalSettings settings = EvalSettings::from_config(cfg);
  auto rows = severity_sweep(model, ds, Split::kTest, {16, 4, 1, 8, 2},
                             settings);
  REQUIRE(rows.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(rows[i].first == std::vector<std::size_t>{1, 2, 4, 8, 16}[i]);
    CHECK(rows[i].second.action_accuracy == rows[0].second.action_accuracy);
    CHECK(rows[i].second.expl_f1_micro == rows[0].second.expl_f1_micro);
    CHECK(rows[i].second.expl_f1_samples == rows[0].second.expl_f1_samples);
  }
  CHECK_THROWS_AS(
      severity_sweep(model, ds, Split::kTest, {3}, settings), data_error);
  CHECK_THROWS_AS(
      severity_sweep(model, ds, Split::kTrain, {1}, settings), data_error);

  const fs::path csv = fs::temp_directory_path() / "vcbm_severity.csv";
  write_severity_csv(csv, rows);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("severity,n,action_accuracy", 0) == 0);
}
