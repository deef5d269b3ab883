#pragma once

// Post-hoc analysis: label-anchored mean features and an exact t-SNE
// embedding of per-sample features together with those anchors.
//
// t-SNE uses the exact O(n^2) formulation: per-point precision found by
// binary search on the conditional entropy, symmetrized affinities, early
// exaggeration, then plain gradient steps with momentum and gain adaptation.
// After the exaggeration phase every step is accepted only if the KL
// objective does not increase (otherwise the step is rejected, the learning
// rate halved, and momentum reset), so recorded KL checkpoints are
// non-increasing by construction.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vcbm/errors.hpp"
#include "vcbm/labels.hpp"
#include "vcbm/rng.hpp"

namespace vcbm {

// ---------------------------------------------------------------------------
// Explanation anchors: masked mean of sample features per explanation label.

struct AnchorSet {
  std::vector<std::vector<double>> mean;  // one row per explanation label
  std::array<bool, kNumEgoExplanations> present{};
  std::size_t dim = 0;
};

inline AnchorSet explanation_anchors(
    const std::vector<std::vector<double>>& features,
    const std::vector<ExplanationBits>& bits) {
  if (features.empty()) throw data_error("anchors: no features");
  if (features.size() != bits.size()) {
    throw data_error("anchors: feature/label count mismatch");
  }
  AnchorSet out;
  out.dim = features[0].size();
  if (out.dim == 0) throw data_error("anchors: zero-dimensional features");
  out.mean.assign(kNumEgoExplanations, std::vector<double>(out.dim, 0.0));
  std::array<std::size_t, kNumEgoExplanations> counts{};
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != out.dim) {
      throw data_error("anchors: inconsistent feature dimension at row " +
                       std::to_string(i));
    }
    for (std::size_t j = 0; j < kNumEgoExplanations; ++j) {
      if (!bits[i][j]) continue;
      ++counts[j];
      for (std::size_t k = 0; k < out.dim; ++k) {
        out.mean[j][k] += features[i][k];
      }
    }
  }
  for (std::size_t j = 0; j < kNumEgoExplanations; ++j) {
    if (counts[j] == 0) {
      out.present[j] = false;  // label never occurs: anchor absent, not NaN
      out.mean[j].assign(out.dim, 0.0);
      continue;
    }
    out.present[j] = true;
    for (double& v : out.mean[j]) v /= static_cast<double>(counts[j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact t-SNE

struct TsneConfig {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::size_t exaggeration_iterations = 250;
  double exaggeration = 12.0;
  double learning_rate = 200.0;
  std::size_t checkpoint_every = 50;
  std::uint64_t seed = 0;
};

struct TsneResult {
  std::vector<std::array<double, 2>> embedding;
  std::vector<double> kl_checkpoints;  // recorded after exaggeration ends
  bool jittered = false;               // duplicate inputs were perturbed
};

namespace tsne_detail {

inline double squared_distance(const std::vector<double>& a,
                               const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

// Conditional distribution for one point at a given precision; returns the
// Shannon entropy in nats and fills row (with row[i] forced to zero).
inline double fill_conditional(const std::vector<double>& d2_row,
                               std::size_t self, double beta,
                               std::vector<double>& row) {
  double sum = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    row[j] = j == self ? 0.0 : std::exp(-beta * d2_row[j]);
    sum += row[j];
  }
  if (sum <= 0.0) return 0.0;
  double entropy = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    row[j] /= sum;
    if (row[j] > 1e-300) entropy -= row[j] * std::log(row[j]);
  }
  return entropy;
}

}  // namespace tsne_detail

inline TsneResult tsne_embed(std::vector<std::vector<double>> points,
                             const TsneConfig& cfg) {
  const std::size_t n = points.size();
  if (n < 3) throw data_error("tsne: need at least 3 points");
  const std::size_t dim = points[0].size();
  for (const auto& p : points) {
    if (p.size() != dim) throw data_error("tsne: inconsistent dimensions");
  }
  if (cfg.perplexity <= 0.0 ||
      cfg.perplexity >= (static_cast<double>(n) - 1.0) / 3.0) {
    throw data_error("tsne: perplexity must be positive and below (n-1)/3");
  }

  TsneResult result;

  // Exact duplicates break the precision search; perturb the later copies.
  {
    Rng jitter_rng = Rng::derive(cfg.seed, {0x6a697474u});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (points[i] == points[j]) {
          for (double& v : points[i]) v += jitter_rng.normal(0.0, 1e-6);
          result.jittered = true;
          break;
        }
      }
    }
  }

  // Pairwise squared distances.
  std::vector<std::vector<double>> d2(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = tsne_detail::squared_distance(points[i], points[j]);
      d2[i][j] = d;
      d2[j][i] = d;
    }
  }

  // Symmetrized affinities at the target perplexity.
  const double target_entropy = std::log(cfg.perplexity);
  std::vector<std::vector<double>> p(n, std::vector<double>(n, 0.0));
  {
    std::vector<double> row(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double beta = 1.0, beta_lo = 0.0, beta_hi = 0.0;
      bool has_lo = false, has_hi = false;
      for (int it = 0; it < 64; ++it) {
        const double entropy =
            tsne_detail::fill_conditional(d2[i], i, beta, row);
        if (std::abs(entropy - target_entropy) < 1e-7) break;
        if (entropy > target_entropy) {
          beta_lo = beta;
          has_lo = true;
          beta = has_hi ? 0.5 * (beta_lo + beta_hi) : beta * 2.0;
        } else {
          beta_hi = beta;
          has_hi = true;
          beta = has_lo ? 0.5 * (beta_lo + beta_hi) : beta * 0.5;
        }
      }
      tsne_detail::fill_conditional(d2[i], i, beta, row);
      for (std::size_t j = 0; j < n; ++j) p[i][j] += row[j];
    }
    const double norm = 1.0 / (2.0 * static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double v = std::max((p[i][j] + p[j][i]) * norm, 1e-12);
        p[i][j] = v;
        p[j][i] = v;
      }
      p[i][i] = 0.0;
    }
  }

  // Low-dimensional state.
  std::vector<std::array<double, 2>> y(n), velocity(n, {0.0, 0.0}),
      gains(n, {1.0, 1.0}), grad(n);
  {
    Rng init_rng = Rng::derive(cfg.seed, {0x74736e65u});
    for (auto& yi : y) {
      yi = {init_rng.normal(0.0, 1e-4), init_rng.normal(0.0, 1e-4)};
    }
  }

  std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
  auto compute_weights = [&](const std::vector<std::array<double, 2>>& pos) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = pos[i][0] - pos[j][0];
        const double dy = pos[i][1] - pos[j][1];
        const double v = 1.0 / (1.0 + dx * dx + dy * dy);
        w[i][j] = v;
        w[j][i] = v;
        total += 2.0 * v;
      }
    }
    return total;
  };
  auto kl_divergence = [&](const std::vector<std::array<double, 2>>& pos) {
    const double total = compute_weights(pos);
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double q = std::max(w[i][j] / total, 1e-12);
        kl += p[i][j] * std::log(p[i][j] / q);
      }
    }
    return kl;
  };

  double lr = cfg.learning_rate;
  double kl_current = -1.0;  // valid once the exaggeration phase ends
  for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
    const bool exaggerated = iter < cfg.exaggeration_iterations;
    const double p_scale = exaggerated ? cfg.exaggeration : 1.0;
    const double total = compute_weights(y);
    for (std::size_t i = 0; i < n; ++i) {
      grad[i] = {0.0, 0.0};
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double coeff =
            4.0 * (p_scale * p[i][j] - w[i][j] / total) * w[i][j];
        grad[i][0] += coeff * (y[i][0] - y[j][0]);
        grad[i][1] += coeff * (y[i][1] - y[j][1]);
      }
    }
    const double momentum = exaggerated ? 0.5 : 0.8;
    std::vector<std::array<double, 2>> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (int k = 0; k < 2; ++k) {
        const bool descending = (grad[i][k] > 0.0) == (velocity[i][k] < 0.0);
        gains[i][k] = descending ? gains[i][k] + 0.2 : gains[i][k] * 0.8;
        gains[i][k] = std::max(gains[i][k], 0.01);
        velocity[i][k] =
            momentum * velocity[i][k] - lr * gains[i][k] * grad[i][k];
        next[i][k] = y[i][k] + velocity[i][k];
      }
    }
    // Re-center so the embedding does not drift.
    double mx = 0.0, my = 0.0;
    for (const auto& yi : next) {
      mx += yi[0];
      my += yi[1];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (auto& yi : next) {
      yi[0] -= mx;
      yi[1] -= my;
    }

    if (exaggerated) {
      y = std::move(next);
    } else {
      if (kl_current < 0.0) kl_current = kl_divergence(y);
      const double kl_next = kl_divergence(next);
      if (kl_next <= kl_current + 1e-12) {
        y = std::move(next);
        kl_current = kl_next;
      } else {
        lr *= 0.5;  // reject the step, damp, and retry from here
        for (auto& v : velocity) v = {0.0, 0.0};
        for (auto& g : gains) g = {1.0, 1.0};
      }
      if ((iter + 1) % cfg.checkpoint_every == 0) {
        result.kl_checkpoints.push_back(kl_current);
      }
    }
  }
  if (kl_current < 0.0) kl_current = kl_divergence(y);
  if (result.kl_checkpoints.empty() ||
      result.kl_checkpoints.back() != kl_current) {
    result.kl_checkpoints.push_back(kl_current);
  }
  result.embedding = std::move(y);
  return result;
}

// ---------------------------------------------------------------------------
// Joint sample+anchor embedding export

struct EmbeddingRow {
  std::string id;
  std::string kind;   // "sample" or "anchor"
  std::string label;  // maneuver code or explanation name
  std::string bits;   // 17-char 0/1 string for samples, empty for anchors
  double x = 0.0;
  double y = 0.0;
};

inline std::string bits_string(const ExplanationBits& bits) {
  std::string s(kNumEgoExplanations, '0');
  for (std::size_t j = 0; j < kNumEgoExplanations; ++j) {
    if (bits[j]) s[j] = '1';
  }
  return s;
}

inline void write_embedding_csv(const std::filesystem::path& path,
                                const std::vector<EmbeddingRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write embedding csv: " + path.string());
  out << "id,kind,label,bits,x,y\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.id << "," << r.kind << "," << r.label << "," << r.bits << ","
        << r.x << "," << r.y << "\n";
  }
}

// Embeds per-sample features jointly with the explanation anchors built from
// them. Row order: samples first (in input order), then present anchors.
inline std::vector<EmbeddingRow> embed_with_anchors(
    const std::vector<std::vector<double>>& features,
    const std::vector<ExplanationBits>& bits,
    const std::vector<std::string>& sample_ids,
    const std::vector<Maneuver>& maneuvers, const TsneConfig& cfg,
    TsneResult* result_out = nullptr) {
  if (features.size() != sample_ids.size() ||
      features.size() != maneuvers.size()) {
    throw data_error("embedding: input size mismatch");
  }
  const AnchorSet anchors = explanation_anchors(features, bits);
  std::vector<std::vector<double>> all = features;
  std::vector<std::size_t> anchor_ids;
  for (std::size_t j = 0; j < kNumEgoExplanations; ++j) {
    if (!anchors.present[j]) continue;
    all.push_back(anchors.mean[j]);
    anchor_ids.push_back(j);
  }
  const TsneResult res = tsne_embed(all, cfg);
  std::vector<EmbeddingRow> rows;
  rows.reserve(all.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    rows.push_back({sample_ids[i], "sample", maneuver_code(maneuvers[i]),
                    bits_string(bits[i]), res.embedding[i][0],
                    res.embedding[i][1]});
  }
  for (std::size_t a = 0; a < anchor_ids.size(); ++a) {
    const std::size_t j = anchor_ids[a];
    rows.push_back({"anchor_" + std::to_string(j), "anchor",
                    ego_explanation_names()[j], "",
                    res.embedding[features.size() + a][0],
                    res.embedding[features.size() + a][1]});
  }
  if (result_out != nullptr) *result_out = res;
  return rows;
}

}  // namespace vcbm
