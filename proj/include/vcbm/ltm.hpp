#pragma once

// Learnable Token Merging. Tokens are softly assigned to K learnable cluster
// centers by a composite distance (cosine feature term + normalized spatial
// and temporal terms, mixed by softmax-normalized learnable weights) and
// merged as weight-normalized sums. Centers evolve only by gradient descent;
// the merge output never overwrites them.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "vcbm/encoder.hpp"
#include "vcbm/errors.hpp"
#include "vcbm/rng.hpp"
#include "vcbm/tensor.hpp"

namespace vcbm {

inline constexpr double kSpatialMax = 1.4142135623730951;  // sqrt(2), grid diagonal
inline constexpr double kTemporalMax = 1.0;

struct ClusterParams {
  std::size_t k = 5;
  Tensor centers;        // K x Dim'
  Tensor positions;      // K x 3, rows (x, y, t) in [0,1]^3
  Tensor weight_logits;  // 3 logits -> (alpha, beta, gamma) via softmax

  static ClusterParams init(std::size_t k, std::size_t dim, Rng& rng) {
    if (k == 0) throw data_error("clusters: K must be >= 1");
    ClusterParams p;
    p.k = k;
    const double stddev = std::sqrt(1.0 / static_cast<double>(dim));
    std::vector<double> c(k * dim);
    for (auto& x : c) x = rng.normal(0.0, stddev);
    p.centers = Tensor::from({k, dim}, std::move(c), true);
    std::vector<double> pos(k * 3);
    for (auto& x : pos) x = rng.uniform();
    p.positions = Tensor::from({k, 3}, std::move(pos), true);
    p.weight_logits = Tensor::zeros({3}, true);  // equal mix at init
    return p;
  }

  Tensor mix_weights() const { return softmax(weight_logits, 0); }
};

struct Assignment {
  Tensor distances;  // N x K composite
  Tensor weights;    // N x K, rows sum to 1
};

struct MergedTokenSet {
  Tensor features;  // K x Dim'
  Tensor coords;    // K x 3
};

struct MergeResult {
  MergedTokenSet merged;
  Assignment assignment;
};

namespace detail {

inline Tensor coord_column(const TokenSet& tokens, std::size_t which) {
  std::vector<double> v(tokens.count);
  for (std::size_t i = 0; i < tokens.count; ++i) v[i] = tokens.coord(i, which);
  return Tensor::from({tokens.count, 1}, std::move(v));
}

inline Tensor coords_tensor(const TokenSet& tokens) {
  return Tensor::from({tokens.count, 3}, tokens.coords);
}

// d_feat[i,j] = 1 - cos(Z_i, C_j), norms epsilon-guarded.
inline Tensor feature_distance_t(const Tensor& z, const Tensor& c) {
  Tensor dots = matmul(z, c, false, true);
  Tensor zn = l2_norm(z, 1, true);
  Tensor cn = l2_norm(c, 1, true);
  Tensor outer = matmul(zn, cn, false, true);
  return sub(Tensor::ones(dots.shape()), divide(dots, outer));
}

// Per-cluster column build: scalar center coordinate broadcast against the
// token coordinate column, assembled back into an N x K matrix.
inline Tensor planar_distance_t(const Tensor& tok_x, const Tensor& tok_y,
                                const Tensor& positions, std::size_t k) {
  std::vector<Tensor> cols;
  cols.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    Tensor row = gather(positions, 0, {j});       // 1 x 3
    Tensor xc = gather(row, 1, {0});              // 1 x 1 scalar
    Tensor yc = gather(row, 1, {1});
    Tensor dx = sub(tok_x, xc);                   // N x 1
    Tensor dy = sub(tok_y, yc);
    cols.push_back(l2_norm(concat({dx, dy}, 1), 1, true));
  }
  return scalar_mul(concat(cols, 1), 1.0 / kSpatialMax);
}

inline Tensor temporal_distance_t(const Tensor& tok_t, const Tensor& positions,
                                  std::size_t k) {
  std::vector<Tensor> cols;
  cols.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    Tensor row = gather(positions, 0, {j});
    Tensor tc = gather(row, 1, {2});
    Tensor dt = sub(tok_t, tc);                   // N x 1
    cols.push_back(l2_norm(dt, 1, true));         // |dt| via sqrt(dt^2 + eps)
  }
  return scalar_mul(concat(cols, 1), 1.0 / kTemporalMax);
}

inline Tensor composite_distance_t(const Tensor& d_feat, const Tensor& d_sp,
                                   const Tensor& d_t, const Tensor& logits) {
  Tensor mix = softmax(logits, 0);
  Tensor alpha = gather(mix, 0, {0});
  Tensor beta = gather(mix, 0, {1});
  Tensor gamma = gather(mix, 0, {2});
  return add(add(mul_elementwise(d_feat, alpha), mul_elementwise(d_sp, beta)),
             mul_elementwise(d_t, gamma));
}

// Eq. 7 for an arbitrary value matrix (features or coords).
inline Tensor weighted_merge_t(const Tensor& weights, const Tensor& values) {
  Tensor num = matmul(weights, values, true, false);        // K x D
  Tensor colsum = sum(weights, 0, true);                    // 1 x K
  Tensor denom = matmul(colsum, Tensor::ones({1, values.shape()[1]}), true,
                        false);                             // K x D
  return divide(num, denom);
}

}  // namespace detail

inline Tensor feature_distance(const TokenSet& tokens, const ClusterParams& clusters) {
  return detail::feature_distance_t(tokens.features, clusters.centers);
}

inline Tensor spatial_distance(const TokenSet& tokens, const ClusterParams& clusters) {
  return detail::planar_distance_t(detail::coord_column(tokens, 0),
                                   detail::coord_column(tokens, 1),
                                   clusters.positions, clusters.k);
}

inline Tensor temporal_distance(const TokenSet& tokens, const ClusterParams& clusters) {
  return detail::temporal_distance_t(detail::coord_column(tokens, 2),
                                     clusters.positions, clusters.k);
}

inline Tensor composite_distance(const TokenSet& tokens, const ClusterParams& clusters) {
  return detail::composite_distance_t(
      feature_distance(tokens, clusters), spatial_distance(tokens, clusters),
      temporal_distance(tokens, clusters), clusters.weight_logits);
}

inline Tensor soft_assign(const Tensor& distances) {
  return softmax(negate(distances), 1);
}

inline MergedTokenSet update_centers(const TokenSet& tokens, const Tensor& weights) {
  MergedTokenSet out;
  out.features = detail::weighted_merge_t(weights, tokens.features);
  out.coords = detail::weighted_merge_t(weights, detail::coords_tensor(tokens));
  return out;
}

inline void check_cluster_count(std::size_t k, std::size_t n) {
  if (k != 1 && k > n / 2) {
    throw data_error("merge: K=" + std::to_string(k) +
                     " too large for N=" + std::to_string(n) +
                     " tokens (need K <= N/2 or K == 1)");
  }
}

inline MergeResult merge(const TokenSet& tokens, const ClusterParams& clusters,
                         std::size_t iterations = 1) {
  if (iterations == 0) throw data_error("merge: iterations must be >= 1");
  check_cluster_count(clusters.k, tokens.count);

  Tensor tok_x = detail::coord_column(tokens, 0);
  Tensor tok_y = detail::coord_column(tokens, 1);
  Tensor tok_t = detail::coord_column(tokens, 2);

  Tensor centers = clusters.centers;
  Tensor positions = clusters.positions;
  MergeResult result;
  for (std::size_t it = 0; it < iterations; ++it) {
    Tensor d_feat = detail::feature_distance_t(tokens.features, centers);
    Tensor d_sp = detail::planar_distance_t(tok_x, tok_y, positions, clusters.k);
    Tensor d_t = detail::temporal_distance_t(tok_t, positions, clusters.k);
    Tensor d = detail::composite_distance_t(d_feat, d_sp, d_t,
                                            clusters.weight_logits);
    Tensor w = soft_assign(d);
    result.assignment = {d, w};
    result.merged = update_centers(tokens, w);
    centers = result.merged.features;
    positions = result.merged.coords;
  }
  return result;
}

}  // namespace vcbm
