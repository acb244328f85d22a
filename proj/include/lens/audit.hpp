#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lens/core.hpp"
#include "lens/probes.hpp"
#include "lens/query.hpp"
#include "lens/store.hpp"

namespace lens {

enum class Bucket { valid_only, spurious, both, unexpected };
inline constexpr std::array<Bucket, 4> kAllBuckets{Bucket::valid_only, Bucket::spurious, Bucket::both,
                                                   Bucket::unexpected};

std::string_view to_string(Bucket b);

// both iff a_valid > 0 and a_spur > 0; spurious iff only a_spur > 0;
// valid_only iff only a_valid > 0; unexpected otherwise.
Bucket classify(double a_valid, double a_spur);

struct AuditRow {
  ComponentId component;
  double a_valid = 0.0;
  double a_spur = 0.0;
  std::optional<std::string> best_valid_label;
  std::optional<std::string> best_spur_label;
  double relevance = 0.0;
  Bucket bucket = Bucket::unexpected;
};

struct AuditAggregates {
  std::array<std::size_t, 4> counts{};          // indexed by Bucket
  std::array<double, 4> relevance_share{};      // relevance-weighted, sums to 1 when any relevance > 0
};

struct AuditReport {
  std::string target;
  std::string layer;
  double threshold = 0.0;
  std::vector<AuditRow> rows;  // relevance descending
  AuditAggregates aggregates;
};

struct AuditOptions {
  std::optional<double> threshold;
  bool allow_missing_null = false;
};

// The rule used when no threshold is given: max(0.01, 0.05 / n_components).
double default_relevance_threshold(std::size_t n_components);

std::vector<ComponentId> relevance_filter(const LensDB& db, std::string_view target, std::string_view layer,
                                          std::optional<double> threshold = std::nullopt);

AuditReport audit(const LensDB& db, const ProbeSet& probes, std::string_view target, std::string_view layer,
                  const AuditOptions& options = {});

// Components in the spurious bucket, in report order.
std::vector<ComponentId> prune_candidates(const AuditReport& report);

struct PhiReport {
  std::vector<double> per_pair;
  double mean = 0.0;
  double standard_error = 0.0;  // sample std / sqrt(n); 0 for a single pair
};

// responses[i][t] is neuron i's mean response to concept t.
PhiReport label_faithfulness_phi(const std::vector<std::vector<double>>& responses,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& assignments);

// AUC as the exact fraction numerator / denominator with
// numerator = 2 * #(p > n) + #(p == n) and denominator = 2 * |P| * |N|.
struct AucCounts {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 0;
  double value() const { return double(numerator) / double(denominator); }
};

AucCounts separability_auc_counts(const std::vector<double>& positive, const std::vector<double>& negative);
double separability_auc(const std::vector<double>& positive, const std::vector<double>& negative);

inline constexpr double kDefaultNodeThreshold = 0.01;

struct GraphNode {
  std::string group;
  std::string layer;
  std::vector<ComponentId> members;
  double max_relevance = 0.0;
};

struct GraphEdge {
  std::size_t upper = 0;  // index into nodes
  std::size_t lower = 0;
  double weight = 0.0;
};

struct AttributionGraph {
  std::string target;
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
};

AttributionGraph build_attribution_graph(const LensDB& db, const std::vector<LabelAssignment>& assignments,
                                         std::string_view target, double node_threshold = kDefaultNodeThreshold);

std::string graph_nodes_tsv(const AttributionGraph& g);
std::string graph_edges_tsv(const AttributionGraph& g);
std::string graph_dot(const AttributionGraph& g);

}  // namespace lens
