#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "vcbm/checkpoint.hpp"

namespace fs = std::filesystem;
using vcbm::Tensor;

namespace {

std::uint64_t bits(double v) {
  std::uint64_t b;
  std::memcpy(&b, &v, sizeof b);
  return b;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("vcbm_ckpt_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir;
  vcbm::ParamMap params;
  params.emplace("layer.weight",
                 Tensor::from({2, 3}, {3.141592653589793, 1.0 / 3.0, 1e-300,
                                       5e-324, -0.0, 1.5}));
  params.emplace("layer.bias", Tensor::from({3}, {0.1, 0.2, 0.30000000000000004}));
  nlohmann::json extra;
  extra["epoch"] = 7;

  const auto path = (dir.path / "ck.json").string();
  vcbm::save_checkpoint(path, params, extra);
  auto loaded = vcbm::load_checkpoint(path);

  REQUIRE(loaded.extra.at("epoch") == 7);
  REQUIRE(loaded.params.size() == 2);
  const auto& w = loaded.params.at("layer.weight");
  REQUIRE(w.shape() == vcbm::Shape{2, 3});
  const auto& orig = params.at("layer.weight").data();
  for (std::size_t i = 0; i < orig.size(); ++i) {
    REQUIRE(bits(w.data()[i]) == bits(orig[i]));
  }
}

TEST_CASE("saving twice produces identical bytes") {
  TempDir dir;
  vcbm::ParamMap params;
  params.emplace("w", Tensor::from({2}, {0.1, -7.25e-12}));
  const auto a = (dir.path / "a.json").string();
  const auto b = (dir.path / "b.json").string();
  vcbm::save_checkpoint(a, params);
  vcbm::save_checkpoint(b, params);
  REQUIRE(read_file(a) == read_file(b));
  REQUIRE_FALSE(read_file(a).empty());
}

TEST_CASE("checkpoint load errors") {
  TempDir dir;
  REQUIRE_THROWS_AS(vcbm::load_checkpoint((dir.path / "missing.json").string()),
                    vcbm::data_error);

  const auto junk = dir.path / "junk.json";
  std::ofstream(junk) << "{not json";
  REQUIRE_THROWS_AS(vcbm::load_checkpoint(junk.string()), vcbm::data_error);

  const auto wrong = dir.path / "wrong.json";
  std::ofstream(wrong) << R"({"format":"other","version":1,"params":{}})";
  REQUIRE_THROWS_AS(vcbm::load_checkpoint(wrong.string()), vcbm::data_error);

  const auto vers = dir.path / "vers.json";
  std::ofstream(vers) << R"({"format":"vcbm-checkpoint","version":99,"params":{}})";
  REQUIRE_THROWS_AS(vcbm::load_checkpoint(vers.string()), vcbm::data_error);

  const auto shape = dir.path / "shape.json";
  std::ofstream(shape) << R"({"format":"vcbm-checkpoint","version":1,
    "params":{"w":{"shape":[2,2],"data":[1.0,2.0,3.0]}}})";
  REQUIRE_THROWS_AS(vcbm::load_checkpoint(shape.string()), vcbm::data_error);
}
