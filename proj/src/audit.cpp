#include "lens/audit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <fmt/format.h>

namespace lens {

std::string_view to_string(Bucket b) {
  switch (b) {
    case Bucket::valid_only: return "valid_only";
    case Bucket::spurious: return "spurious";
    case Bucket::both: return "both";
    case Bucket::unexpected: return "unexpected";
  }
  return "unexpected";
}

Bucket classify(double a_valid, double a_spur) {
  const bool valid = a_valid > 0.0;
  const bool spur = a_spur > 0.0;
  if (valid && spur) return Bucket::both;
  if (spur) return Bucket::spurious;
  if (valid) return Bucket::valid_only;
  return Bucket::unexpected;
}

double default_relevance_threshold(std::size_t n_components) {
  if (n_components == 0) throw Error(ErrorCode::InvalidArgument, "layer has no components");
  return std::max(0.01, 0.05 / double(n_components));
}

std::vector<ComponentId> relevance_filter(const LensDB& db, std::string_view target, std::string_view layer,
                                          std::optional<double> threshold) {
  const std::size_t pos = db.layer_position(layer);
  const auto& decl = db.manifest().layers[pos];
  if (!decl.has_relevance) throw Error(ErrorCode::MissingRelevance, "layer '" + decl.name + "' has no relevance");
  const std::size_t t = db.target_index(target);
  const double cut = threshold.value_or(default_relevance_threshold(decl.n_components));
  std::vector<ComponentId> kept;
  for (std::size_t r = 0; r < decl.rows(); ++r) {
    if (db.relevance(pos, r, t) >= cut) kept.push_back(db.component_at(pos, r));
  }
  return kept;
}

AuditReport audit(const LensDB& db, const ProbeSet& probes, std::string_view target, std::string_view layer,
                  const AuditOptions& options) {
  if (probes.count(Validity::valid) == 0) throw Error(ErrorCode::NoValidConcepts, "probe set has no valid concepts");
  if (probes.count(Validity::spurious) == 0) {
    throw Error(ErrorCode::NoSpuriousConcepts, "probe set has no spurious concepts");
  }
  if (!probes.null_embedding && !options.allow_missing_null) {
    throw Error(ErrorCode::NullEmbeddingMissing, "probe set '" + probes.name + "' has no null embedding");
  }
  probes.validate(db.dim());

  const std::size_t pos = db.layer_position(layer);
  const auto& decl = db.manifest().layers[pos];
  const std::size_t t = db.target_index(target);
  AuditReport report;
  report.target = std::string(target);
  report.layer = decl.name;
  report.threshold = options.threshold.value_or(default_relevance_threshold(decl.n_components));

  const auto null = probes.null_view();
  for (const auto& id : relevance_filter(db, target, layer, report.threshold)) {
    const auto theta = db.component(id).theta;
    AuditRow row;
    row.component = id;
    row.a_valid = -std::numeric_limits<double>::infinity();
    row.a_spur = -std::numeric_limits<double>::infinity();
    for (const auto& c : probes.concepts) {
      if (c.validity == Validity::neutral) continue;
      const double a = alignment(theta, c.embedding, null);
      auto& best = c.validity == Validity::valid ? row.a_valid : row.a_spur;
      auto& label = c.validity == Validity::valid ? row.best_valid_label : row.best_spur_label;
      if (a > best) {
        best = a;
        label = c.label;
      }
    }
    row.relevance = db.relevance(pos, db.row_of(id), t);
    row.bucket = classify(row.a_valid, row.a_spur);
    report.rows.push_back(std::move(row));
  }
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const AuditRow& a, const AuditRow& b) { return a.relevance > b.relevance; });

  double total = 0.0;
  for (const auto& row : report.rows) {
    const auto b = std::size_t(row.bucket);
    ++report.aggregates.counts[b];
    report.aggregates.relevance_share[b] += row.relevance;
    total += row.relevance;
  }
  for (auto& share : report.aggregates.relevance_share) share = total > 0.0 ? share / total : 0.0;
  return report;
}

std::vector<ComponentId> prune_candidates(const AuditReport& report) {
  std::vector<ComponentId> out;
  for (const auto& row : report.rows) {
    if (row.bucket == Bucket::spurious) out.push_back(row.component);
  }
  return out;
}

PhiReport label_faithfulness_phi(const std::vector<std::vector<double>>& responses,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& assignments) {
  if (assignments.empty()) throw Error(ErrorCode::EmptySet, "no neuron-label assignments to score");
  PhiReport report;
  for (const auto& [neuron, concept_] : assignments) {
    if (neuron >= responses.size()) throw Error(ErrorCode::InvalidArgument, "assignment neuron out of range");
    const auto& row = responses[neuron];
    if (concept_ >= row.size()) throw Error(ErrorCode::InvalidArgument, "assignment concept out of range");
    for (double v : row) {
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "response matrix entry");
    }
    const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
    if (!(*hi > *lo)) {
      throw Error(ErrorCode::DegenerateResponse, "neuron " + std::to_string(neuron) + " responds identically");
    }
    report.per_pair.push_back((row[concept_] - *lo) / (*hi - *lo));
  }
  const double n = double(report.per_pair.size());
  for (double p : report.per_pair) report.mean += p;
  report.mean /= n;
  if (report.per_pair.size() > 1) {
    double ss = 0.0;
    for (double p : report.per_pair) ss += (p - report.mean) * (p - report.mean);
    report.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return report;
}

AucCounts separability_auc_counts(const std::vector<double>& positive, const std::vector<double>& negative) {
  if (positive.empty() || negative.empty()) throw Error(ErrorCode::EmptySet, "AUC needs both sets non-empty");
  std::vector<double> sorted = negative;
  for (double v : sorted) {
    if (std::isnan(v)) throw Error(ErrorCode::NonFiniteValue, "AUC input is NaN");
  }
  std::sort(sorted.begin(), sorted.end());
  AucCounts counts;
  for (double p : positive) {
    if (std::isnan(p)) throw Error(ErrorCode::NonFiniteValue, "AUC input is NaN");
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), p);
    const auto hi = std::upper_bound(lo, sorted.end(), p);
    counts.numerator += 2 * std::uint64_t(lo - sorted.begin()) + std::uint64_t(hi - lo);
  }
  counts.denominator = 2 * std::uint64_t(positive.size()) * std::uint64_t(negative.size());
  return counts;
}

double separability_auc(const std::vector<double>& positive, const std::vector<double>& negative) {
  return separability_auc_counts(positive, negative).value();
}

AttributionGraph build_attribution_graph(const LensDB& db, const std::vector<LabelAssignment>& assignments,
                                         std::string_view target, double node_threshold) {
  const auto& layers = db.manifest().layers;
  if (std::none_of(layers.begin(), layers.end(), [](const LayerDecl& l) { return l.has_edges; })) {
    throw Error(ErrorCode::MissingEdges, "database has no relevance edges");
  }
  const std::size_t t = db.target_index(target);

  using Key = std::pair<std::size_t, std::size_t>;  // (layer position, row)
  std::map<Key, std::string> group_of;
  for (const auto& a : assignments) {
    group_of[{db.layer_position(a.component.layer), db.row_of(a.component)}] = a.label.value_or(kUnlabelledGroup);
  }
  auto group = [&](const Key& k) -> std::string {
    const auto it = group_of.find(k);
    return it == group_of.end() ? std::string(kUnlabelledGroup) : it->second;
  };
  auto relevant = [&](const Key& k) { return db.relevance(k.first, k.second, t) >= node_threshold; };

  using NodeKey = std::pair<std::size_t, std::string>;
  std::map<NodeKey, std::set<std::size_t>> members;
  std::map<std::pair<NodeKey, NodeKey>, double> edge_weights;
  for (const auto& [key, g] : group_of) {
    if (relevant(key)) members[{key.first, g}].insert(key.second);
  }
  for (std::size_t upper_pos = 0; upper_pos < layers.size(); ++upper_pos) {
    for (const auto& e : db.layers()[upper_pos].edges) {
      if (e.target != target) continue;
      const Key upper{upper_pos, db.row_of(e.upper)};
      const Key lower{db.layer_position(e.lower.layer), db.row_of(e.lower)};
      if (lower.first + 1 != upper.first) continue;
      if (!relevant(upper) || !relevant(lower)) continue;
      const NodeKey un{upper.first, group(upper)};
      const NodeKey ln{lower.first, group(lower)};
      members[un].insert(upper.second);
      members[ln].insert(lower.second);
      edge_weights[{un, ln}] += e.weight;
    }
  }

  AttributionGraph g;
  g.target = std::string(target);
  std::map<NodeKey, std::size_t> index;
  for (const auto& [key, rows] : members) {
    GraphNode node;
    node.group = key.second;
    node.layer = layers[key.first].name;
    for (std::size_t r : rows) {
      node.members.push_back(db.component_at(key.first, r));
      node.max_relevance = std::max(node.max_relevance, db.relevance(key.first, r, t));
    }
    index[key] = g.nodes.size();
    g.nodes.push_back(std::move(node));
  }
  for (const auto& [pair, w] : edge_weights) g.edges.push_back({index.at(pair.first), index.at(pair.second), w});
  return g;
}

std::string graph_nodes_tsv(const AttributionGraph& g) {
  std::string out = "node\tgroup\tlayer\tmax_relevance\tmembers\n";
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    std::string members;
    for (const auto& m : n.members) members += (members.empty() ? "" : ",") + m.str();
    out += fmt::format("{}\t{}\t{}\t{}\t{}\n", i, n.group, n.layer, n.max_relevance, members);
  }
  return out;
}

std::string graph_edges_tsv(const AttributionGraph& g) {
  std::string out = "upper\tlower\tweight\n";
  for (const auto& e : g.edges) out += fmt::format("{}\t{}\t{}\n", e.upper, e.lower, e.weight);
  return out;
}

std::string graph_dot(const AttributionGraph& g) {
  auto escape = [](const std::string& s) {
    std::string r;
    for (char c : s) {
      if (c == '"' || c == '\\') r += '\\';
      r += c;
    }
    return r;
  };
  std::string out = fmt::format("digraph \"{}\" {{\n  rankdir=TB;\n", escape(g.target));
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    out += fmt::format("  n{} [label=\"{}\\n{}\\nR={:.3g}\"];\n", i, escape(n.group), escape(n.layer), n.max_relevance);
  }
  for (const auto& e : g.edges) out += fmt::format("  n{} -> n{} [label=\"{:.3g}\"];\n", e.upper, e.lower, e.weight);
  out += "}\n";
  return out;
}

}  // namespace lens
