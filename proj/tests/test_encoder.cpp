#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "vcbm/encoder.hpp"
#include "vcbm/gradcheck.hpp"
#include "vcbm/rng.hpp"

using Catch::Approx;
using vcbm::Rng;
using vcbm::Tensor;
using vcbm::TubeletProjection;
using vcbm::TubeletSpec;
using vcbm::VideoClip;
using vcbm::View;

namespace {

TubeletProjection make_proj(TubeletSpec spec, std::size_t channels,
                            std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  return TubeletProjection::init(spec, channels, dim, rng);
}

}  // namespace

TEST_CASE("token count follows the shape rule") {
  auto clip = VideoClip::make(View::kFront, 8, 16, 16, 1);
  auto proj = make_proj({4, 8, 8}, 1, 6, 1);
  auto tokens = vcbm::tubelet_embed(clip, proj);
  REQUIRE(tokens.count == 8);  // 2*2*2
  REQUIRE(tokens.features.shape() == vcbm::Shape{8, 6});
  REQUIRE(tokens.coords.size() == 8 * 3);
}

TEST_CASE("zero clip with zero bias embeds to exactly zero") {
  auto clip = VideoClip::make(View::kFront, 4, 8, 8, 2);
  auto proj = make_proj({2, 4, 4}, 2, 5, 2);
  auto tokens = vcbm::tubelet_embed(clip, proj);
  for (double v : tokens.features.data()) REQUIRE(v == 0.0);
}

TEST_CASE("single voxel touches exactly one token") {
  auto zero = VideoClip::make(View::kFront, 4, 8, 8, 1);
  auto one = zero;
  one.at(3, 5, 2, 0) = 1.0;  // tubelet (t=1, h=1, w=0) under (2,4,4)
  auto proj = make_proj({2, 4, 4}, 1, 4, 3);
  auto base = vcbm::tubelet_embed(zero, proj);
  auto bumped = vcbm::tubelet_embed(one, proj);
  std::size_t changed = 0;
  for (std::size_t n = 0; n < base.count; ++n) {
    bool differs = false;
    for (std::size_t d = 0; d < 4; ++d) {
      if (base.features.at({n, d}) != bumped.features.at({n, d})) differs = true;
    }
    if (differs) ++changed;
  }
  REQUIRE(changed == 1);
  // The changed token is (ti=1, hi=1, wi=0) -> row ti*(2*2) + hi*2 + wi = 6.
  REQUIRE(base.features.at({6, 0}) != bumped.features.at({6, 0}));
}

TEST_CASE("embedding is linear in the input") {
  Rng rng(11);
  auto clip = VideoClip::make(View::kFront, 4, 4, 4, 2);
  for (auto& v : clip.voxels) v = rng.uniform();
  auto scaled = clip;
  const double a = 0.37;
  for (auto& v : scaled.voxels) v *= a;

  auto proj = make_proj({2, 2, 2}, 2, 3, 4);
  proj.bias = Tensor::zeros({3}, true);
  auto t1 = vcbm::tubelet_embed(clip, proj);
  auto t2 = vcbm::tubelet_embed(scaled, proj);
  for (std::size_t i = 0; i < t1.features.data().size(); ++i) {
    REQUIRE(t2.features.data()[i] ==
            Approx(a * t1.features.data()[i]).margin(1e-10));
  }
}

TEST_CASE("coords are tubelet centers over (W, H, T)") {
  auto clip = VideoClip::make(View::kFront, 8, 16, 16, 1);
  auto proj = make_proj({4, 8, 8}, 1, 2, 5);
  auto tokens = vcbm::tubelet_embed(clip, proj);
  // Token order: t-major, then h, then w. Token 0 = (ti=0, hi=0, wi=0).
  REQUIRE(tokens.coord(0, 0) == Approx(0.25));
  REQUIRE(tokens.coord(0, 1) == Approx(0.25));
  REQUIRE(tokens.coord(0, 2) == Approx(0.25));
  // Token 1 = (0, 0, 1): x moves.
  REQUIRE(tokens.coord(1, 0) == Approx(0.75));
  REQUIRE(tokens.coord(1, 1) == Approx(0.25));
  // Token 4 = (1, 0, 0): t moves.
  REQUIRE(tokens.coord(4, 2) == Approx(0.75));
  for (double c : tokens.coords) {
    REQUIRE(c >= 0.0);
    REQUIRE(c <= 1.0);
  }
}

TEST_CASE("non-divisible extents raise errors naming the axis") {
  auto proj = make_proj({4, 8, 8}, 1, 2, 6);
  auto bad_t = VideoClip::make(View::kFront, 7, 16, 16, 1);
  REQUIRE_THROWS_MATCHES(
      vcbm::tubelet_embed(bad_t, proj), vcbm::data_error,
      Catch::Matchers::MessageMatches(
          Catch::Matchers::ContainsSubstring("temporal")));
  auto bad_h = VideoClip::make(View::kFront, 8, 12, 16, 1);
  REQUIRE_THROWS_MATCHES(
      vcbm::tubelet_embed(bad_h, proj), vcbm::data_error,
      Catch::Matchers::MessageMatches(
          Catch::Matchers::ContainsSubstring("height")));
  auto bad_w = VideoClip::make(View::kFront, 8, 16, 20, 1);
  REQUIRE_THROWS_MATCHES(
      vcbm::tubelet_embed(bad_w, proj), vcbm::data_error,
      Catch::Matchers::MessageMatches(
          Catch::Matchers::ContainsSubstring("width")));
  auto bad_c = VideoClip::make(View::kFront, 8, 16, 16, 3);
  REQUIRE_THROWS_AS(vcbm::tubelet_embed(bad_c, proj), vcbm::data_error);
}

TEST_CASE("fuse_views concatenates gaze then front") {
  auto gaze_clip = VideoClip::make(View::kGaze, 4, 8, 8, 1);  // zero stream
  auto front_clip = VideoClip::make(View::kFront, 4, 8, 8, 1);
  Rng rng(7);
  for (auto& v : front_clip.voxels) v = rng.uniform();

  auto gproj = make_proj({2, 4, 4}, 1, 3, 8);
  auto fproj = make_proj({2, 4, 4}, 1, 5, 9);
  auto g = vcbm::tubelet_embed(gaze_clip, gproj);
  auto f = vcbm::tubelet_embed(front_clip, fproj);
  auto fused = vcbm::fuse_views(g, f);

  REQUIRE(fused.dim == 8);
  REQUIRE(fused.features.shape() == vcbm::Shape{g.count, 8});
  for (std::size_t n = 0; n < fused.count; ++n) {
    for (std::size_t d = 0; d < 3; ++d) {
      REQUIRE(fused.features.at({n, d}) == 0.0);  // zero gaze stream
    }
    for (std::size_t d = 0; d < 5; ++d) {
      REQUIRE(fused.features.at({n, 3 + d}) == f.features.at({n, d}));
    }
  }
  REQUIRE(fused.coords == f.coords);
}

TEST_CASE("fuse_views rejects misaligned views") {
  auto a = VideoClip::make(View::kGaze, 4, 8, 8, 1);
  auto b = VideoClip::make(View::kFront, 4, 8, 8, 1);
  auto proj_small = make_proj({2, 4, 4}, 1, 3, 10);
  auto proj_large = make_proj({2, 2, 2}, 1, 3, 11);
  auto g = vcbm::tubelet_embed(a, proj_small);
  auto f = vcbm::tubelet_embed(b, proj_large);  // 32 tokens vs 8
  REQUIRE_THROWS_AS(vcbm::fuse_views(g, f), vcbm::data_error);

  auto f2 = vcbm::tubelet_embed(b, proj_small);
  auto g2 = vcbm::tubelet_embed(a, proj_small);
  g2.coords[0] += 0.5;  // same N, different grid
  REQUIRE_THROWS_AS(vcbm::fuse_views(g2, f2), vcbm::data_error);
}

TEST_CASE("gradients flow through the projection") {
  Rng rng(13);
  auto clip = VideoClip::make(View::kFront, 4, 4, 4, 2);
  for (auto& v : clip.voxels) v = rng.uniform();
  auto proj = make_proj({2, 2, 2}, 2, 3, 14);
  auto f = [&] {
    auto tokens = vcbm::tubelet_embed(clip, proj);
    return vcbm::sum(vcbm::sum(tokens.features, 1), 0);
  };
  auto report = vcbm::grad_check(f, {proj.weight, proj.bias}, 1e-5);
  REQUIRE(report.max_rel_err < 1e-6);
}

TEST_CASE("clip validation catches out-of-range voxels") {
  auto clip = VideoClip::make(View::kFront, 2, 2, 2, 1);
  clip.validate();
  clip.voxels[3] = 1.5;
  REQUIRE_THROWS_AS(clip.validate(), vcbm::data_error);
  clip.voxels[3] = std::nan("");
  REQUIRE_THROWS_AS(clip.validate(), vcbm::data_error);
}
