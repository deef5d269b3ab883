// End-to-end tests for the command-line tool. Each test invokes the real
// binary (path injected via VCBM_CLI_PATH) in a scratch directory and
// inspects exit codes and written artifacts.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcbm/checkpoint.hpp"
#include "vcbm/dataset.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CmdResult {
  int code = -1;
  std::string output;
};

CmdResult run_cli(const std::string& args, const fs::path& workdir,
                  const std::string& env_prefix = "") {
  const fs::path out_file = workdir / "_cmd_output.txt";
  std::string cmd = "cd '" + workdir.string() + "' && " + env_prefix + "'" +
                    VCBM_CLI_PATH + "' " + args + " > '" + out_file.string() +
                    "' 2>&1";
  const int raw = std::system(cmd.c_str());
  CmdResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// One scratch area with a small generated dataset and a short training run,
// shared across test cases to keep the suite fast.
struct CliFixture {
  fs::path root;
  fs::path ds;
  fs::path run;
  std::string train_args;

  CliFixture() {
    root = fs::temp_directory_path() / "vcbm_cli_test";
    fs::remove_all(root);
    fs::create_directories(root);
    ds = root / "ds";
    run = root / "run";

    CmdResult gen = run_cli(
        "generate --out ds --n 24 --seed 3 --shape 16x32x32", root);
    if (gen.code != 0) {
      throw std::runtime_error("fixture generate failed: " + gen.output);
    }
    train_args =
        "--dataset-dir ds --epochs 2 --batch-size 8 --dim-per-view 8 --k 3 "
        "--gaze-variant crop:8 --seed 1";
    CmdResult tr = run_cli("train " + train_args + " --out run", root);
    if (tr.code != 0) {
      throw std::runtime_error("fixture train failed: " + tr.output);
    }
  }

  static const CliFixture& get() {
    static CliFixture fixture;
    return fixture;
  }
};

}  // namespace

TEST_CASE("cli: version, help, and usage errors") {
  const fs::path root = CliFixture::get().root;

  CmdResult version = run_cli("--version", root);
  CHECK(version.code == 0);
  CHECK(version.output.find("vcbm") != std::string::npos);

  CHECK(run_cli("--help", root).code == 0);
  CHECK(run_cli("generate --help", root).code == 0);

  CHECK(run_cli("", root).code == 2);                  // missing subcommand
  CHECK(run_cli("frobnicate", root).code == 2);        // unknown subcommand
  CHECK(run_cli("train", root).code == 2);             // missing required
  CHECK(run_cli("train --dataset-dir ds --out x --epochs abc", root).code ==
        2);                                            // unparsable value
}

TEST_CASE("cli: generate writes a loadable, reproducible dataset") {
  const CliFixture& fx = CliFixture::get();

  vcbm::Dataset ds = vcbm::load_dataset(fx.ds);
  CHECK(ds.samples.size() == 24);
  CHECK_FALSE(ds.split_indices(vcbm::Split::kTrain).empty());
  CHECK_FALSE(ds.split_indices(vcbm::Split::kVal).empty());

  json manifest = json::parse(read_file(fx.ds / "run_manifest.json"));
  CHECK(manifest.at("command") == "generate");
  CHECK(manifest.at("dataset").at("checksum") ==
        vcbm::dataset_checksum(fx.ds));
  CHECK_FALSE(manifest.at("argv").empty());

  // Same flags, second directory: byte-identical dataset.
  CmdResult gen2 = run_cli(
      "generate --out ds2 --n 24 --seed 3 --shape 16x32x32", fx.root);
  REQUIRE(gen2.code == 0);
  CHECK(vcbm::dataset_checksum(fx.root / "ds2") ==
        vcbm::dataset_checksum(fx.ds));

  CHECK(run_cli("generate --out bad1 --n 5 --shape 16x32", fx.root).code ==
        3);
  CHECK(run_cli("generate --out bad2 --n 5 --shape 16x32x32 "
                "--frequency-profile 0.5,0.5",
                fx.root).code == 3);
  CHECK_FALSE(fs::exists(fx.root / "bad1"));
}

TEST_CASE("cli: train artifacts and checkpoint metadata") {
  const CliFixture& fx = CliFixture::get();

  for (const char* name : {"checkpoint_best.json", "checkpoint_final.json",
                           "train_log.csv", "train_log.json",
                           "run_manifest.json"}) {
    CHECK(fs::exists(fx.run / name));
  }

  vcbm::Checkpoint ck =
      vcbm::load_checkpoint((fx.run / "checkpoint_final.json").string());
  CHECK(ck.extra.at("epochs_completed") == 2);
  CHECK(ck.extra.at("config").at("dim_per_view") == 8);
  CHECK(ck.extra.at("dataset_checksum") == vcbm::dataset_checksum(fx.ds));
  CHECK_FALSE(ck.params.empty());

  const auto lines = read_lines(fx.run / "train_log.csv");
  REQUIRE(lines.size() == 3);  // header + 2 epochs
  CHECK(lines[0].rfind("epoch,total_loss,loss_ly,loss_lc,loss_l1", 0) == 0);
  CHECK(lines[1].rfind("0,", 0) == 0);
  CHECK(lines[2].rfind("1,", 0) == 0);
}

TEST_CASE("cli: rerunning the manifest argv reproduces training bitwise") {
  const CliFixture& fx = CliFixture::get();

  json manifest = json::parse(read_file(fx.run / "run_manifest.json"));
  std::vector<std::string> argv =
      manifest.at("argv").get<std::vector<std::string>>();
  for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
    if (argv[i] == "--out") argv[i + 1] = "run_repro";
  }
  std::string args;
  for (const auto& a : argv) args += a + " ";

  CmdResult rerun = run_cli(args, fx.root);
  REQUIRE(rerun.code == 0);
  for (const char* name : {"checkpoint_best.json", "checkpoint_final.json",
                           "train_log.csv", "train_log.json"}) {
    INFO(name);
    CHECK(read_file(fx.run / name) == read_file(fx.root / "run_repro" / name));
  }
}

TEST_CASE("cli: non-empty output directory needs --force") {
  const CliFixture& fx = CliFixture::get();

  CmdResult refuse = run_cli("train " + fx.train_args + " --out run", fx.root);
  CHECK(refuse.code == 3);
  CHECK(refuse.output.find("--force") != std::string::npos);

  CmdResult forced =
      run_cli("train " + fx.train_args + " --out run --force", fx.root);
  CHECK(forced.code == 0);
}

TEST_CASE("cli: eval writes metrics and deterministic predictions") {
  const CliFixture& fx = CliFixture::get();

  CmdResult ev = run_cli("eval --checkpoint run/checkpoint_best.json "
                         "--dataset-dir ds --out eval1 --split val",
                         fx.root);
  REQUIRE(ev.code == 0);

  const vcbm::Dataset ds = vcbm::load_dataset(fx.ds);
  const std::size_t val_n = ds.split_indices(vcbm::Split::kVal).size();

  json metrics = json::parse(read_file(fx.root / "eval1" / "metrics.json"));
  CHECK(metrics.at("report").at("n") == val_n);
  CHECK(metrics.at("settings").at("split") == "val");

  json preds = json::parse(read_file(fx.root / "eval1" / "predictions.json"));
  REQUIRE(preds.at("predictions").size() == val_n);
  const std::string weight_id = preds.at("final_weight_id");
  CHECK(weight_id.size() == 16);
  for (const auto& p : preds.at("predictions")) {
    REQUIRE(p.at("maneuver_probs").size() == 7);
    REQUIRE(p.at("expl_probs").size() == 17);
    double sum = 0.0;
    for (const auto& v : p.at("maneuver_probs")) sum += v.get<double>();
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }

  CmdResult ev2 = run_cli("eval --checkpoint run/checkpoint_best.json "
                          "--dataset-dir ds --out eval2 --split val",
                          fx.root);
  REQUIRE(ev2.code == 0);
  CHECK(read_file(fx.root / "eval1" / "metrics.json") ==
        read_file(fx.root / "eval2" / "metrics.json"));
  CHECK(read_file(fx.root / "eval1" / "predictions.json") ==
        read_file(fx.root / "eval2" / "predictions.json"));

  // Dataset dir can come from the environment instead of the flag.
  CmdResult env_ev = run_cli("eval --checkpoint run/checkpoint_best.json "
                             "--out eval_env --split val",
                             fx.root, "VCBM_DATASET_DIR=ds ");
  CHECK(env_ev.code == 0);
}

TEST_CASE("cli: export-tsne writes embedding rows for samples and anchors") {
  const CliFixture& fx = CliFixture::get();

  CmdResult ts = run_cli("export-tsne --checkpoint run/checkpoint_best.json "
                         "--dataset-dir ds --out tsne1 --split train "
                         "--perplexity 4 --iterations 300",
                         fx.root);
  REQUIRE(ts.code == 0);

  const vcbm::Dataset ds = vcbm::load_dataset(fx.ds);
  const std::size_t train_n = ds.split_indices(vcbm::Split::kTrain).size();

  const auto lines = read_lines(fx.root / "tsne1" / "embedding.csv");
  REQUIRE(lines.size() >= 1 + train_n);
  CHECK(lines[0] == "id,kind,label,bits,x,y");
  std::size_t samples = 0, anchors = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].find(",sample,") != std::string::npos) samples += 1;
    if (lines[i].find(",anchor,") != std::string::npos) anchors += 1;
  }
  CHECK(samples == train_n);
  CHECK(anchors >= 1);
  CHECK(anchors <= 17);

  json info = json::parse(read_file(fx.root / "tsne1" / "tsne.json"));
  const auto kl = info.at("kl_checkpoints").get<std::vector<double>>();
  REQUIRE_FALSE(kl.empty());
  for (std::size_t i = 1; i < kl.size(); ++i) {
    CHECK(kl[i] <= kl[i - 1] + 1e-12);
  }
}

TEST_CASE("cli: ablation validates values before training") {
  const CliFixture& fx = CliFixture::get();

  CmdResult bad_axis = run_cli(
      "ablate --dataset-dir ds --out abx --axis nonsense --values 1", fx.root);
  CHECK(bad_axis.code == 3);

  CmdResult bad_value = run_cli(
      "ablate --dataset-dir ds --out aby --axis lambda --values 0.5,junk "
      "--epochs 1",
      fx.root);
  CHECK(bad_value.code == 3);

  CmdResult ok = run_cli(
      "ablate --dataset-dir ds --out ab1 --axis lambda --values 0.0,0.5 "
      "--epochs 1 --batch-size 8 --dim-per-view 8 --k 3 --gaze-variant "
      "crop:8 --seed 1",
      fx.root);
  REQUIRE(ok.code == 0);
  const auto lines = read_lines(fx.root / "ab1" / "ablation.csv");
  REQUIRE(lines.size() == 3);
  CHECK(lines[0].rfind("axis,value,best_epoch,n,", 0) == 0);
  CHECK(lines[1].rfind("lambda,0.0,", 0) == 0);
  CHECK(lines[2].rfind("lambda,0.5,", 0) == 0);
}

TEST_CASE("cli: resume continues the epoch numbering") {
  const CliFixture& fx = CliFixture::get();

  CmdResult resumed = run_cli(
      "train --dataset-dir ds --out run_resume --resume "
      "run/checkpoint_final.json --epochs 4",
      fx.root);
  REQUIRE(resumed.code == 0);
  const auto lines = read_lines(fx.root / "run_resume" / "train_log.csv");
  REQUIRE(lines.size() == 3);  // header + epochs 2 and 3
  CHECK(lines[1].rfind("2,", 0) == 0);
  CHECK(lines[2].rfind("3,", 0) == 0);

  CmdResult exhausted = run_cli(
      "train --dataset-dir ds --out run_exhausted --resume "
      "run/checkpoint_final.json --epochs 2",
      fx.root);
  CHECK(exhausted.code == 3);

  CmdResult missing = run_cli(
      "eval --checkpoint nope.json --dataset-dir ds --out evx", fx.root);
  CHECK(missing.code == 3);
}
