#pragma once

#include <cstdint>
#include <vector>

#include "lens/core.hpp"

namespace lens {

struct ClarityScore {
  double value = 0.0;
  std::size_t n = 0;
};

struct PolysemanticityScore {
  double value = 0.0;
  std::size_t h = 2;
  bool degenerate = false;
};

struct ClusterAssignment {
  std::vector<std::size_t> labels;  // one per row, in [0, k)
  EmbeddingMatrix centroids;        // k unit vectors
  std::vector<std::size_t> sizes;
  std::size_t iterations = 0;

  std::size_t non_empty() const;
};

// Average pairwise cosine similarity, evaluated with the O(n d) identity
// n/(n-1) * (||mean of unit rows||^2 - 1/n). Requires n >= 2.
ClarityScore clarity(MatrixView v);

// The O(n^2) pairwise definition; kept for cross-checking the compact form.
double clarity_pairwise_oracle(MatrixView v);

double concept_similarity(VectorView theta_a, VectorView theta_b);

// Mean over rows of the best cosine to any other row. Requires >= 2 rows.
double redundancy(MatrixView thetas);

inline constexpr std::size_t kKMeansMaxIterations = 100;
inline constexpr double kKMeansTolerance = 1e-6;

// Cosine k-means on L2-normalised rows with seeded k-means++ initialisation.
// Deterministic for a given (rows, k, seed).
ClusterAssignment spherical_kmeans(MatrixView v, std::size_t k, std::uint64_t seed);

// 1 - clarity of the per-cluster sums of raw example vectors. Sets that do
// not split into h non-empty clusters score 0 and are flagged degenerate.
PolysemanticityScore polysemanticity(MatrixView v, std::size_t h = 2, std::uint64_t seed = 7);

}  // namespace lens
