#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lens/core.hpp"
#include "lens/probes.hpp"
#include "lens/store.hpp"

namespace lens {

inline constexpr double kDefaultLabelThreshold = 0.025;
inline constexpr const char* kUnlabelledGroup = "?";

// nullopt selects every layer; an explicit empty list is rejected.
using LayerFilter = std::optional<std::vector<std::string>>;

struct SearchHit {
  ComponentId component;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
};

struct LabelAssignment {
  ComponentId component;
  std::optional<std::string> label;
  double alignment = 0.0;
  std::optional<std::string> category;
};

enum class GroupBy { label, category };

struct DissectionRow {
  std::string group;
  std::string layer;
  std::size_t count = 0;
  double relative_share = 0.0;
};

struct Projection {
  std::vector<std::array<double, 2>> coords;
  std::array<double, 2> eigenvalues{};  // of the sample covariance
  double total_variance = 0.0;
  double captured_variance_fraction = 0.0;
};

struct ClusterLabel {
  std::size_t cluster = 0;
  std::size_t size = 0;
  std::vector<std::size_t> members;
  std::vector<std::pair<std::string, double>> labels;  // best first
};

// Resolves a filter to layer positions in manifest order.
std::vector<std::size_t> resolve_layers(const LensDB& db, const LayerFilter& layers);

// Exhaustive scan; ordering is score descending, then layer order, then row.
std::vector<SearchHit> search(const LensDB& db, VectorView probe, std::optional<VectorView> null,
                              const LayerFilter& layers, std::size_t top_n);

std::vector<LabelAssignment> label_components(const LensDB& db, const ProbeSet& probes, const LayerFilter& layers,
                                              double tau = kDefaultLabelThreshold);

std::vector<DissectionRow> dissect(const std::vector<LabelAssignment>& assignments, GroupBy group_by);

// Average over A of the best cosine into B. Not symmetric.
double compare_sets(MatrixView a, MatrixView b);

Projection project_2d(MatrixView m);

std::vector<ClusterLabel> cluster_labels(MatrixView m, std::size_t k, const ProbeSet& probes, std::size_t top = 2,
                                         std::uint64_t seed = 7);

}  // namespace lens
