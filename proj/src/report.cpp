#include "lens/report.hpp"

#include <charconv>

namespace lens::report {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string sign_str(Sign s) { return s == Sign::negative ? "negative" : "positive"; }

std::string opt(const std::optional<std::string>& s) { return s ? csv_field(*s) : std::string(); }
std::string opt(const std::optional<double>& v) { return v ? number(*v) : std::string(); }

json opt_json(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }
json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string id_columns(const ComponentId& id) {
  return csv_field(id.str()) + "," + csv_field(id.layer) + "," + std::to_string(id.index) + "," + sign_str(id.sign);
}

}  // namespace

std::string number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

MetricsReport layer_metrics(const LensDB& db, std::string_view layer, std::size_t h, std::uint64_t seed) {
  const std::size_t pos = db.layer_position(layer);
  const auto& decl = db.manifest().layers[pos];
  MetricsReport report;
  report.layer = decl.name;
  for (std::size_t r = 0; r < decl.rows(); ++r) {
    const auto rec = db.component(db.component_at(pos, r));
    ComponentMetrics cm;
    cm.component = rec.id;
    if (rec.examples && rec.examples->rows >= 2) {
      cm.clarity = clarity(*rec.examples).value;
      if (rec.examples->rows >= h) {
        const auto p = polysemanticity(*rec.examples, h, seed);
        cm.polysemanticity = p.value;
        cm.degenerate = p.degenerate;
      }
    }
    report.rows.push_back(std::move(cm));
  }
  if (decl.rows() >= 2) report.redundancy = redundancy(db.mean_embeddings(pos));
  return report;
}

std::string search_csv(const std::vector<SearchHit>& hits) {
  std::string out = "rank,component_id,layer,index,sign,score\n";
  for (const auto& h : hits) out += std::to_string(h.rank) + "," + id_columns(h.component) + "," + number(h.score) + "\n";
  return out;
}

std::string labels_csv(const std::vector<LabelAssignment>& labels) {
  std::string out = "component_id,layer,index,sign,label,category,alignment\n";
  for (const auto& l : labels) {
    out += id_columns(l.component) + "," + opt(l.label) + "," + opt(l.category) + "," + number(l.alignment) + "\n";
  }
  return out;
}

std::string dissection_csv(const std::vector<DissectionRow>& rows) {
  std::string out = "layer,group,count,relative_share\n";
  for (const auto& r : rows) {
    out += csv_field(r.layer) + "," + csv_field(r.group) + "," + std::to_string(r.count) + "," +
           number(r.relative_share) + "\n";
  }
  return out;
}

std::string audit_csv(const AuditReport& report) {
  std::string out = "component_id,layer,index,sign,relevance,a_valid,a_spur,best_valid_label,best_spur_label,bucket\n";
  for (const auto& r : report.rows) {
    out += id_columns(r.component) + "," + number(r.relevance) + "," + number(r.a_valid) + "," + number(r.a_spur) +
           "," + opt(r.best_valid_label) + "," + opt(r.best_spur_label) + "," + std::string(to_string(r.bucket)) +
           "\n";
  }
  return out;
}

std::string metrics_csv(const MetricsReport& report) {
  std::string out = "component_id,clarity,polysemanticity,degenerate,redundancy\n";
  for (const auto& r : report.rows) {
    out += csv_field(r.component.str()) + "," + opt(r.clarity) + "," + opt(r.polysemanticity) + "," +
           (r.degenerate ? "true" : "false") + ",\n";
  }
  out += csv_field(report.layer) + ",,,," + opt(report.redundancy) + "\n";
  return out;
}

std::string projection_csv(const LensDB& db, std::size_t layer_pos, const Projection& p) {
  std::string out = "component_id,x,y\n";
  for (std::size_t r = 0; r < p.coords.size(); ++r) {
    out += csv_field(db.component_at(layer_pos, r).str()) + "," + number(p.coords[r][0]) + "," +
           number(p.coords[r][1]) + "\n";
  }
  return out;
}

std::string cluster_labels_csv(const std::vector<ClusterLabel>& clusters) {
  std::string out = "cluster,size,rank,label,alignment\n";
  for (const auto& c : clusters) {
    if (c.labels.empty()) {
      out += std::to_string(c.cluster) + "," + std::to_string(c.size) + ",,,\n";
      continue;
    }
    for (std::size_t i = 0; i < c.labels.size(); ++i) {
      out += std::to_string(c.cluster) + "," + std::to_string(c.size) + "," + std::to_string(i + 1) + "," +
             csv_field(c.labels[i].first) + "," + number(c.labels[i].second) + "\n";
    }
  }
  return out;
}

json to_json(const ComponentId& id) {
  json j;
  j["id"] = id.str();
  j["model_id"] = id.model_id;
  j["layer"] = id.layer;
  j["index"] = id.index;
  j["sign"] = sign_str(id.sign);
  return j;
}

json to_json(const std::vector<SearchHit>& hits) {
  json arr = json::array();
  for (const auto& h : hits) {
    json j;
    j["rank"] = h.rank;
    j["component"] = to_json(h.component);
    j["score"] = h.score;
    arr.push_back(std::move(j));
  }
  return arr;
}

json to_json(const std::vector<LabelAssignment>& labels) {
  json arr = json::array();
  for (const auto& l : labels) {
    json j;
    j["component"] = to_json(l.component);
    j["label"] = opt_json(l.label);
    j["category"] = opt_json(l.category);
    j["alignment"] = l.alignment;
    arr.push_back(std::move(j));
  }
  return arr;
}

json to_json(const std::vector<DissectionRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    json j;
    j["layer"] = r.layer;
    j["group"] = r.group;
    j["count"] = r.count;
    j["relative_share"] = r.relative_share;
    arr.push_back(std::move(j));
  }
  return arr;
}

json to_json(const AuditReport& report) {
  json j;
  j["target"] = report.target;
  j["layer"] = report.layer;
  j["threshold"] = report.threshold;
  j["rows"] = json::array();
  for (const auto& r : report.rows) {
    json jr;
    jr["component"] = to_json(r.component);
    jr["relevance"] = r.relevance;
    jr["a_valid"] = r.a_valid;
    jr["a_spur"] = r.a_spur;
    jr["best_valid_label"] = opt_json(r.best_valid_label);
    jr["best_spur_label"] = opt_json(r.best_spur_label);
    jr["bucket"] = to_string(r.bucket);
    j["rows"].push_back(std::move(jr));
  }
  json counts, shares;
  for (Bucket b : kAllBuckets) {
    counts[std::string(to_string(b))] = report.aggregates.counts[std::size_t(b)];
    shares[std::string(to_string(b))] = report.aggregates.relevance_share[std::size_t(b)];
  }
  j["aggregates"]["counts"] = std::move(counts);
  j["aggregates"]["relevance_share"] = std::move(shares);
  json prune = json::array();
  for (const auto& id : prune_candidates(report)) prune.push_back(id.str());
  j["prune_candidates"] = std::move(prune);
  return j;
}

json to_json(const MetricsReport& report) {
  json j;
  j["layer"] = report.layer;
  j["redundancy"] = opt_json(report.redundancy);
  j["components"] = json::array();
  for (const auto& r : report.rows) {
    json jr;
    jr["component"] = to_json(r.component);
    jr["clarity"] = opt_json(r.clarity);
    jr["polysemanticity"] = opt_json(r.polysemanticity);
    jr["degenerate"] = r.degenerate;
    j["components"].push_back(std::move(jr));
  }
  return j;
}

json to_json(const LensDB& db, std::size_t layer_pos, const Projection& p) {
  json j;
  j["layer"] = db.manifest().layers[layer_pos].name;
  j["eigenvalues"] = p.eigenvalues;
  j["total_variance"] = p.total_variance;
  j["captured_variance_fraction"] = p.captured_variance_fraction;
  j["points"] = json::array();
  for (std::size_t r = 0; r < p.coords.size(); ++r) {
    json jp;
    jp["component"] = db.component_at(layer_pos, r).str();
    jp["x"] = p.coords[r][0];
    jp["y"] = p.coords[r][1];
    j["points"].push_back(std::move(jp));
  }
  return j;
}

json to_json(const std::vector<ClusterLabel>& clusters) {
  json arr = json::array();
  for (const auto& c : clusters) {
    json j;
    j["cluster"] = c.cluster;
    j["size"] = c.size;
    j["members"] = c.members;
    j["labels"] = json::array();
    for (const auto& [label, a] : c.labels) j["labels"].push_back({{"label", label}, {"alignment", a}});
    arr.push_back(std::move(j));
  }
  return arr;
}

json to_json(const AttributionGraph& graph) {
  json j;
  j["target"] = graph.target;
  j["nodes"] = json::array();
  for (const auto& n : graph.nodes) {
    json jn;
    jn["group"] = n.group;
    jn["layer"] = n.layer;
    jn["max_relevance"] = n.max_relevance;
    json members = json::array();
    for (const auto& m : n.members) members.push_back(m.str());
    jn["members"] = std::move(members);
    j["nodes"].push_back(std::move(jn));
  }
  j["edges"] = json::array();
  for (const auto& e : graph.edges) j["edges"].push_back({{"upper", e.upper}, {"lower", e.lower}, {"weight", e.weight}});
  return j;
}

json layer_descriptor(const LayerDecl& decl) {
  json j;
  j["name"] = decl.name;
  j["n_components"] = decl.n_components;
  j["m_examples"] = decl.m_examples;
  j["signed"] = decl.is_signed;
  j["has_example_embeddings"] = decl.has_example_embeddings;
  j["has_activations"] = decl.has_activations;
  j["has_relevance"] = decl.has_relevance;
  j["has_edges"] = decl.has_edges;
  return j;
}

}  // namespace lens::report
