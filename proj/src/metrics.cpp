#include "lens/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace lens {

namespace {

using Rows = std::vector<std::vector<double>>;

void require_set_size(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::EmptySet, "clarity of an empty set");
  if (n == 1) throw Error(ErrorCode::SingletonSet, "clarity needs at least two vectors");
}

Rows unit_rows(MatrixView v) {
  Rows out(v.rows, std::vector<double>(v.dim));
  for (std::size_t i = 0; i < v.rows; ++i) {
    const auto row = v.row(i);
    const double norm = l2_norm(row);
    if (!(norm >= 1e-12)) throw Error(ErrorCode::ZeroNormVector, "row " + std::to_string(i) + " has zero norm");
    for (std::size_t j = 0; j < v.dim; ++j) out[i][j] = row[j] / norm;
  }
  return out;
}

double compact_clarity(const Rows& rows) {
  const std::size_t n = rows.size();
  require_set_size(n);
  const std::size_t d = rows.front().size();
  std::vector<double> mean(d, 0.0);
  for (const auto& r : rows) {
    double sq = 0.0;
    for (double x : r) sq += x * x;
    const double norm = std::sqrt(sq);
    if (!(norm >= 1e-12)) throw Error(ErrorCode::ZeroNormVector, "clarity input has a zero-norm vector");
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j] / norm;
  }
  double sq = 0.0;
  for (double& m : mean) {
    m /= double(n);
    sq += m * m;
  }
  const double nd = double(n);
  return nd / (nd - 1.0) * (sq - 1.0 / nd);
}

double dot_rows(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * b[j];
  return acc;
}

// Uniform double in [0, 1) from the raw engine output, independent of the
// standard library's distribution implementations.
double unit_uniform(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::size_t ClusterAssignment::non_empty() const {
  return std::size_t(std::count_if(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; }));
}

ClarityScore clarity(MatrixView v) {
  require_set_size(v.rows);
  Rows rows(v.rows);
  for (std::size_t i = 0; i < v.rows; ++i) {
    const auto r = v.row(i);
    rows[i].assign(r.begin(), r.end());
  }
  return {compact_clarity(rows), v.rows};
}

double clarity_pairwise_oracle(MatrixView v) {
  require_set_size(v.rows);
  double acc = 0.0;
  for (std::size_t i = 0; i < v.rows; ++i) {
    for (std::size_t j = 0; j < v.rows; ++j) {
      if (i != j) acc += cosine_similarity(v.row(i), v.row(j));
    }
  }
  const double n = double(v.rows);
  return acc / (n * (n - 1.0));
}

double concept_similarity(VectorView theta_a, VectorView theta_b) { return cosine_similarity(theta_a, theta_b); }

double redundancy(MatrixView thetas) {
  if (thetas.rows == 0) throw Error(ErrorCode::EmptySet, "redundancy of an empty set");
  if (thetas.rows == 1) throw Error(ErrorCode::SingletonSet, "redundancy needs at least two embeddings");
  const Rows unit = unit_rows(thetas);
  double acc = 0.0;
  for (std::size_t k = 0; k < unit.size(); ++k) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < unit.size(); ++j) {
      if (j != k) best = std::max(best, dot_rows(unit[k], unit[j]));
    }
    acc += best;
  }
  return acc / double(unit.size());
}

ClusterAssignment spherical_kmeans(MatrixView v, std::size_t k, std::uint64_t seed) {
  const std::size_t n = v.rows;
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (k > n) {
    throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " rows");
  }
  const std::size_t d = v.dim;
  const Rows unit = unit_rows(v);
  std::mt19937_64 rng(seed);

  // k-means++ seeding with squared chord distance 2 - 2cos.
  std::vector<std::size_t> chosen{std::size_t(rng() % n)};
  std::vector<double> best_cos(n, -std::numeric_limits<double>::infinity());
  std::vector<bool> is_center(n, false);
  is_center[chosen[0]] = true;
  while (chosen.size() < k) {
    const auto& last = unit[chosen.back()];
    double total = 0.0;
    std::vector<double> weight(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      best_cos[i] = std::max(best_cos[i], dot_rows(unit[i], last));
      if (!is_center[i]) weight[i] = std::max(0.0, 2.0 - 2.0 * best_cos[i]);
      total += weight[i];
    }
    std::size_t pick = n;
    if (total > 1e-300) {
      const double target = unit_uniform(rng) * total;
      double cumulative = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (weight[i] <= 0.0) continue;
        cumulative += weight[i];
        pick = i;
        if (cumulative > target) break;
      }
    } else {
      pick = std::size_t(std::find(is_center.begin(), is_center.end(), false) - is_center.begin());
    }
    is_center[pick] = true;
    chosen.push_back(pick);
  }

  Rows centroids;
  for (std::size_t c : chosen) centroids.push_back(unit[c]);

  std::vector<std::size_t> labels(n, 0);
  std::vector<std::size_t> sizes(k, 0);
  std::size_t iteration = 0;
  while (iteration < kKMeansMaxIterations) {
    ++iteration;
    std::vector<double> own_cos(n);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_value = dot_rows(unit[i], centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double s = dot_rows(unit[i], centroids[c]);
        if (s > best_value) {
          best_value = s;
          best = c;
        }
      }
      labels[i] = best;
      own_cos[i] = best_value;
      ++sizes[best];
    }

    // Re-seed empty clusters from the point farthest from its centroid. A
    // point sitting exactly on its centroid carries no new direction.
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) continue;
      std::size_t far = n;
      double far_cos = 1.0 - 1e-12;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[labels[i]] > 1 && own_cos[i] < far_cos) {
          far_cos = own_cos[i];
          far = i;
        }
      }
      if (far == n) continue;
      --sizes[labels[far]];
      labels[far] = c;
      own_cos[far] = 1.0;
      sizes[c] = 1;
      centroids[c] = unit[far];
    }

    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;
      std::vector<double> sum(d, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != c) continue;
        for (std::size_t j = 0; j < d; ++j) sum[j] += unit[i][j];
      }
      const double norm = std::sqrt(dot_rows(sum, sum));
      if (norm < 1e-12) continue;
      double delta = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        sum[j] /= norm;
        delta += (sum[j] - centroids[c][j]) * (sum[j] - centroids[c][j]);
      }
      shift = std::max(shift, std::sqrt(delta));
      centroids[c] = std::move(sum);
    }
    if (shift < kKMeansTolerance) break;
  }

  std::vector<float> flat;
  flat.reserve(k * d);
  for (const auto& c : centroids) {
    for (double x : c) flat.push_back(float(x));
  }
  return {std::move(labels), EmbeddingMatrix(k, d, std::move(flat)), std::move(sizes), iteration};
}

PolysemanticityScore polysemanticity(MatrixView v, std::size_t h, std::uint64_t seed) {
  if (h < 2) throw Error(ErrorCode::InvalidArgument, "polysemanticity needs h >= 2");
  if (v.rows < h) throw Error(ErrorCode::KTooLarge, "fewer examples than clusters");
  const auto clusters = spherical_kmeans(v, h, seed);
  if (clusters.non_empty() < h) return {0.0, h, true};

  Rows sums(h, std::vector<double>(v.dim, 0.0));
  for (std::size_t i = 0; i < v.rows; ++i) {
    const auto row = v.row(i);
    auto& s = sums[clusters.labels[i]];
    for (std::size_t j = 0; j < v.dim; ++j) s[j] += row[j];
  }
  return {1.0 - compact_clarity(sums), h, false};
}

}  // namespace lens
