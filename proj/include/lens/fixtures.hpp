#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lens/audit.hpp"
#include "lens/core.hpp"
#include "lens/probes.hpp"
#include "lens/store.hpp"

namespace lens::fixtures {

// What was planted into a component of the audited (last) layer.
enum class Planted { background, valid, spurious, both, unexpected, duplicate, polysemantic };

struct LayerSpec {
  std::string name;
  std::size_t n_components = 1;
};

struct SyntheticDbSpec {
  std::uint64_t seed = 1;
  std::size_t dim = 32;
  std::size_t m_examples = 8;
  std::vector<LayerSpec> layers{{"features", 24}};
  std::vector<std::string> targets{"target"};

  // Planted counts, all placed at the start of the last layer in this order.
  std::size_t n_valid = 4;
  std::size_t n_spurious = 4;
  std::size_t n_both = 2;
  std::size_t n_unexpected = 2;
  std::size_t n_duplicate_pairs = 0;
  std::size_t n_polysemantic = 0;

  bool with_example_embeddings = true;
  bool with_activations = true;
  bool with_relevance = true;
  bool with_edges = true;
  bool with_example_meta = true;
  bool with_thumbnails = false;
  bool signed_first_layer = false;
  double noise = 0.02;
};

struct GroundTruth {
  std::string audit_layer;
  std::vector<Planted> planted;                          // per row of audit_layer
  std::vector<std::optional<std::string>> label;         // expected label at tau = 0.025
  std::vector<std::optional<Bucket>> bucket;             // for relevant (planted) rows
  std::vector<std::size_t> duplicate_of;                 // row index of the twin, or the row itself
  std::vector<std::vector<std::size_t>> example_cluster;  // planted theme of each example, per row
  std::optional<double> redundancy;                      // set when every row has an exact twin
};

struct Fixture {
  LensDB db;
  ProbeSet probes;
  GroundTruth truth;
};

// Pure function of the spec.
Fixture generate(const SyntheticDbSpec& spec);

// One layer whose components each have the two example vectors e_(2k), e_(2k+1):
// every clarity is exactly 0.
LensDB orthogonal_pairs_db(std::size_t n_components, std::size_t dim);

// Single-purpose db from explicit theta rows, one entry per layer.
LensDB db_from_thetas(const std::vector<std::pair<std::string, std::vector<Vector>>>& layers,
                      std::vector<std::string> targets = {}, std::vector<std::vector<float>> relevance = {});

// Portable seeded draws; identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::size_t index(std::size_t n) { return std::size_t(engine_() % n); }
  Vector gaussian_vector(std::size_t dim);

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

// Brute-force references shipped alongside the fixtures. They share no code
// path with the engine beyond the storage accessors.
namespace oracle {

struct ScoredComponent {
  ComponentId component;
  long double score;
};

std::vector<ScoredComponent> exhaustive_search(const LensDB& db, VectorView probe,
                                               std::optional<VectorView> null = std::nullopt);
long double pairwise_clarity(MatrixView v);
long double pair_counting_auc(const std::vector<double>& positive, const std::vector<double>& negative);
long double cosine(VectorView x, VectorView y);

}  // namespace oracle

}  // namespace lens::fixtures
