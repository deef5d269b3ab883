#pragma once

// Dual-view tubelet encoder. Each view is cut into non-overlapping
// t_p x h_p x w_p tubelets, flattened and linearly projected to Dim channels;
// the two views are fused by channel concatenation. Every token carries its
// tubelet-center coordinate (x, y, t) normalized to [0,1].

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "vcbm/errors.hpp"
#include "vcbm/rng.hpp"
#include "vcbm/tensor.hpp"

namespace vcbm {

enum class View { kGaze, kFront };

inline const char* view_name(View v) {
  return v == View::kGaze ? "gaze" : "front";
}

struct VideoClip {
  View view = View::kFront;
  std::size_t t = 0, h = 0, w = 0, c = 0;
  std::vector<double> voxels;       // t-major, then h, w, c
  std::vector<double> frame_times;  // uniform 0..t-1 unless shuffled

  static VideoClip make(View view, std::size_t t, std::size_t h,
                        std::size_t w, std::size_t c, double fill = 0.0) {
    VideoClip clip;
    clip.view = view;
    clip.t = t;
    clip.h = h;
    clip.w = w;
    clip.c = c;
    clip.voxels.assign(t * h * w * c, fill);
    clip.frame_times.resize(t);
    for (std::size_t i = 0; i < t; ++i) clip.frame_times[i] = static_cast<double>(i);
    return clip;
  }

  std::size_t index(std::size_t ti, std::size_t hi, std::size_t wi,
                    std::size_t ci) const {
    return ((ti * h + hi) * w + wi) * c + ci;
  }
  double& at(std::size_t ti, std::size_t hi, std::size_t wi, std::size_t ci) {
    return voxels[index(ti, hi, wi, ci)];
  }
  double at(std::size_t ti, std::size_t hi, std::size_t wi, std::size_t ci) const {
    return voxels[index(ti, hi, wi, ci)];
  }

  void validate() const {
    if (t == 0 || h == 0 || w == 0 || c == 0) {
      throw data_error("clip: zero extent (t,h,w,c)=(" + std::to_string(t) + "," +
                       std::to_string(h) + "," + std::to_string(w) + "," +
                       std::to_string(c) + ")");
    }
    if (voxels.size() != t * h * w * c) {
      throw data_error("clip: voxel count " + std::to_string(voxels.size()) +
                       " does not match shape");
    }
    if (frame_times.size() != t) {
      throw data_error("clip: frame_times size mismatch");
    }
    for (double v : voxels) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw data_error("clip: voxel value " + std::to_string(v) +
                         " outside [0,1]");
      }
    }
  }
};

struct TubeletSpec {
  std::size_t t = 4, h = 16, w = 16;
};

struct TubeletProjection {
  TubeletSpec tubelet;
  std::size_t channels = 3;
  std::size_t dim = 16;
  Tensor weight;  // (t_p*h_p*w_p*C) x dim
  Tensor bias;    // dim

  std::size_t patch_size() const {
    return tubelet.t * tubelet.h * tubelet.w * channels;
  }

  static TubeletProjection init(TubeletSpec spec, std::size_t channels,
                                std::size_t dim, Rng& rng) {
    TubeletProjection p;
    p.tubelet = spec;
    p.channels = channels;
    p.dim = dim;
    const std::size_t fan_in = p.patch_size();
    const double stddev = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::vector<double> w(fan_in * dim);
    for (auto& x : w) x = rng.normal(0.0, stddev);
    p.weight = Tensor::from({fan_in, dim}, std::move(w), true);
    p.bias = Tensor::zeros({dim}, true);
    return p;
  }
};

struct TokenSet {
  Tensor features;             // N x Dim, graph-connected
  std::vector<double> coords;  // N x 3 flat, (x, y, t) rows, constants
  std::size_t count = 0;
  std::size_t dim = 0;

  double coord(std::size_t i, std::size_t k) const { return coords[i * 3 + k]; }
};

inline TokenSet tubelet_embed(const VideoClip& clip, const TubeletProjection& params) {
  const auto& tb = params.tubelet;
  if (tb.t == 0 || clip.t % tb.t != 0) {
    throw data_error("tubelet_embed: temporal extent " + std::to_string(clip.t) +
                     " not divisible by tubelet t=" + std::to_string(tb.t));
  }
  if (tb.h == 0 || clip.h % tb.h != 0) {
    throw data_error("tubelet_embed: height " + std::to_string(clip.h) +
                     " not divisible by tubelet h=" + std::to_string(tb.h));
  }
  if (tb.w == 0 || clip.w % tb.w != 0) {
    throw data_error("tubelet_embed: width " + std::to_string(clip.w) +
                     " not divisible by tubelet w=" + std::to_string(tb.w));
  }
  if (clip.c != params.channels) {
    throw data_error("tubelet_embed: clip has " + std::to_string(clip.c) +
                     " channels, projection expects " +
                     std::to_string(params.channels));
  }

  const std::size_t nt = clip.t / tb.t;
  const std::size_t nh = clip.h / tb.h;
  const std::size_t nw = clip.w / tb.w;
  const std::size_t n = nt * nh * nw;
  const std::size_t p = params.patch_size();

  // Patch matrix: one flattened tubelet per row, (dt, dh, dw, c) order.
  std::vector<double> patches(n * p);
  std::vector<double> coords(n * 3);
  std::size_t row = 0;
  for (std::size_t ti = 0; ti < nt; ++ti) {
    for (std::size_t hi = 0; hi < nh; ++hi) {
      for (std::size_t wi = 0; wi < nw; ++wi, ++row) {
        double* dst = patches.data() + row * p;
        for (std::size_t dt = 0; dt < tb.t; ++dt) {
          for (std::size_t dh = 0; dh < tb.h; ++dh) {
            const double* src = clip.voxels.data() +
                clip.index(ti * tb.t + dt, hi * tb.h + dh, wi * tb.w, 0);
            for (std::size_t i = 0; i < tb.w * clip.c; ++i) *dst++ = src[i];
          }
        }
        coords[row * 3 + 0] =
            (static_cast<double>(wi) + 0.5) * static_cast<double>(tb.w) /
            static_cast<double>(clip.w);
        coords[row * 3 + 1] =
            (static_cast<double>(hi) + 0.5) * static_cast<double>(tb.h) /
            static_cast<double>(clip.h);
        coords[row * 3 + 2] =
            (static_cast<double>(ti) + 0.5) * static_cast<double>(tb.t) /
            static_cast<double>(clip.t);
      }
    }
  }

  TokenSet out;
  Tensor x = Tensor::from({n, p}, std::move(patches));
  out.features = add(matmul(x, params.weight), params.bias);
  out.coords = std::move(coords);
  out.count = n;
  out.dim = params.dim;
  return out;
}

inline TokenSet fuse_views(const TokenSet& gaze, const TokenSet& front) {
  if (gaze.count != front.count) {
    throw data_error("fuse_views: token counts differ (" +
                     std::to_string(gaze.count) + " vs " +
                     std::to_string(front.count) + ")");
  }
  if (gaze.coords != front.coords) {
    throw data_error("fuse_views: views are not aligned on the same grid");
  }
  TokenSet out;
  out.features = concat({gaze.features, front.features}, 1);
  out.coords = front.coords;
  out.count = front.count;
  out.dim = gaze.dim + front.dim;
  return out;
}

}  // namespace vcbm
