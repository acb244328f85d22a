#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lens/audit.hpp"
#include "lens/metrics.hpp"
#include "lens/query.hpp"
#include "lens/store.hpp"

namespace lens::report {

using json = nlohmann::ordered_json;

struct ComponentMetrics {
  ComponentId component;
  std::optional<double> clarity;  // absent without example embeddings or with m < 2
  std::optional<double> polysemanticity;
  bool degenerate = false;
};

struct MetricsReport {
  std::string layer;
  std::vector<ComponentMetrics> rows;
  std::optional<double> redundancy;  // absent for single-component layers
};

MetricsReport layer_metrics(const LensDB& db, std::string_view layer, std::size_t h = 2, std::uint64_t seed = 7);

// Shortest round-trip decimal form.
std::string number(double v);

// CSV: header row, comma separated, fields quoted only when needed.
std::string search_csv(const std::vector<SearchHit>& hits);
std::string labels_csv(const std::vector<LabelAssignment>& labels);
std::string dissection_csv(const std::vector<DissectionRow>& rows);
std::string audit_csv(const AuditReport& report);
std::string metrics_csv(const MetricsReport& report);
std::string projection_csv(const LensDB& db, std::size_t layer_pos, const Projection& p);
std::string cluster_labels_csv(const std::vector<ClusterLabel>& clusters);

json to_json(const ComponentId& id);
json to_json(const std::vector<SearchHit>& hits);
json to_json(const std::vector<LabelAssignment>& labels);
json to_json(const std::vector<DissectionRow>& rows);
json to_json(const AuditReport& report);
json to_json(const MetricsReport& report);
json to_json(const LensDB& db, std::size_t layer_pos, const Projection& p);
json to_json(const std::vector<ClusterLabel>& clusters);
json to_json(const AttributionGraph& graph);
json layer_descriptor(const LayerDecl& decl);

}  // namespace lens::report
