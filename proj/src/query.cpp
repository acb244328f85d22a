#include "lens/query.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include <Eigen/Dense>

#include "lens/metrics.hpp"

namespace lens {

namespace {

struct Scored {
  double score;
  std::size_t layer_pos;
  std::size_t row;
};

bool better(const Scored& a, const Scored& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.layer_pos, a.row) < std::tie(b.layer_pos, b.row);
}

void require_probe(VectorView v, std::size_t dim, const char* what) {
  if (v.size() != dim) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " has dim " + std::to_string(v.size()) +
                                                  ", database dim is " + std::to_string(dim));
  }
  require_valid_vector(v, what);
}

}  // namespace

std::vector<std::size_t> resolve_layers(const LensDB& db, const LayerFilter& layers) {
  std::vector<std::size_t> out;
  if (!layers) {
    for (std::size_t i = 0; i < db.layers().size(); ++i) out.push_back(i);
    return out;
  }
  if (layers->empty()) throw Error(ErrorCode::EmptyLayerFilter, "layer filter selects no layers");
  for (const auto& name : *layers) out.push_back(db.layer_position(name));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<SearchHit> search(const LensDB& db, VectorView probe, std::optional<VectorView> null,
                              const LayerFilter& layers, std::size_t top_n) {
  if (top_n == 0) throw Error(ErrorCode::InvalidArgument, "top_n must be >= 1");
  require_probe(probe, db.dim(), "probe");
  if (null) require_probe(*null, db.dim(), "null embedding");
  const auto positions = resolve_layers(db, layers);

  const double probe_norm = l2_norm(probe);
  const double null_norm = null ? l2_norm(*null) : 0.0;
  std::vector<Scored> scored;
  for (std::size_t pos : positions) {
    const auto thetas = db.mean_embeddings(pos);
    for (std::size_t r = 0; r < thetas.rows; ++r) {
      const auto theta = thetas.row(r);
      const double theta_norm = db.theta_norm(pos, r);
      double score = dot(probe, theta) / (probe_norm * theta_norm);
      if (null) score = score - dot(*null, theta) / (null_norm * theta_norm);
      scored.push_back({score, pos, r});
    }
  }
  const std::size_t keep = std::min(top_n, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + std::ptrdiff_t(keep), scored.end(), better);

  std::vector<SearchHit> hits;
  hits.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    hits.push_back({db.component_at(scored[i].layer_pos, scored[i].row), scored[i].score, i + 1});
  }
  return hits;
}

std::vector<LabelAssignment> label_components(const LensDB& db, const ProbeSet& probes, const LayerFilter& layers,
                                              double tau) {
  if (probes.concepts.empty()) throw Error(ErrorCode::EmptySet, "probe set has no concepts");
  probes.validate(db.dim());
  const auto positions = resolve_layers(db, layers);

  std::vector<double> concept_norms;
  for (const auto& c : probes.concepts) concept_norms.push_back(l2_norm(c.embedding));
  const auto null = probes.null_view();
  const double null_norm = null ? l2_norm(*null) : 0.0;

  std::vector<LabelAssignment> out;
  for (std::size_t pos : positions) {
    const auto thetas = db.mean_embeddings(pos);
    for (std::size_t r = 0; r < thetas.rows; ++r) {
      const auto theta = thetas.row(r);
      const double theta_norm = db.theta_norm(pos, r);
      const double null_cos = null ? dot(*null, theta) / (null_norm * theta_norm) : 0.0;
      std::size_t best = 0;
      double best_value = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < probes.concepts.size(); ++c) {
        double a = dot(probes.concepts[c].embedding, theta) / (concept_norms[c] * theta_norm);
        if (null) a = a - null_cos;
        if (a > best_value) {
          best_value = a;
          best = c;
        }
      }
      LabelAssignment la;
      la.component = db.component_at(pos, r);
      la.alignment = best_value;
      if (best_value > tau) {
        la.label = probes.concepts[best].label;
        la.category = probes.concepts[best].category;
      }
      out.push_back(std::move(la));
    }
  }
  return out;
}

std::vector<DissectionRow> dissect(const std::vector<LabelAssignment>& assignments, GroupBy group_by) {
  struct LayerTally {
    std::map<std::string, std::size_t> groups;
    std::size_t labelled = 0;
    std::size_t unlabelled = 0;
  };
  std::vector<std::string> layer_order;
  std::map<std::string, LayerTally> tallies;
  for (const auto& a : assignments) {
    auto [it, inserted] = tallies.try_emplace(a.component.layer);
    if (inserted) layer_order.push_back(a.component.layer);
    auto& t = it->second;
    if (!a.label) {
      ++t.unlabelled;
      continue;
    }
    const std::string& group = (group_by == GroupBy::category && a.category) ? *a.category : *a.label;
    ++t.groups[group];
    ++t.labelled;
  }

  std::vector<DissectionRow> rows;
  for (const auto& layer : layer_order) {
    const auto& t = tallies.at(layer);
    std::vector<DissectionRow> layer_rows;
    for (const auto& [group, count] : t.groups) {
      layer_rows.push_back({group, layer, count, double(count) / double(t.labelled)});
    }
    std::stable_sort(layer_rows.begin(), layer_rows.end(),
                     [](const DissectionRow& a, const DissectionRow& b) { return a.count > b.count; });
    if (t.unlabelled > 0) {
      layer_rows.push_back(
          {kUnlabelledGroup, layer, t.unlabelled, double(t.unlabelled) / double(t.unlabelled + t.labelled)});
    }
    rows.insert(rows.end(), layer_rows.begin(), layer_rows.end());
  }
  return rows;
}

double compare_sets(MatrixView a, MatrixView b) {
  if (a.rows == 0 || b.rows == 0) throw Error(ErrorCode::EmptySet, "set comparison needs non-empty sets");
  if (a.dim != b.dim) throw Error(ErrorCode::DimensionMismatch, "set comparison across different dims");
  std::vector<double> b_norms(b.rows);
  for (std::size_t j = 0; j < b.rows; ++j) {
    require_valid_vector(b.row(j), "set B row");
    b_norms[j] = l2_norm(b.row(j));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i) {
    const auto x = a.row(i);
    require_valid_vector(x, "set A row");
    const double nx = l2_norm(x);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b.rows; ++j) best = std::max(best, dot(x, b.row(j)) / (nx * b_norms[j]));
    acc += best;
  }
  return acc / double(a.rows);
}

Projection project_2d(MatrixView m) {
  if (m.rows < 3) throw Error(ErrorCode::InvalidArgument, "projection needs at least 3 rows");
  const Eigen::Index n = Eigen::Index(m.rows);
  const Eigen::Index d = Eigen::Index(m.dim);
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = m.row(std::size_t(i));
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = row[std::size_t(j)];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const double total = x.squaredNorm() / double(n - 1);
  if (!(total > 1e-30)) throw Error(ErrorCode::DegenerateData, "all rows coincide; total variance is 0");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  Eigen::MatrixXd directions = Eigen::MatrixXd::Zero(d, 2);
  Projection p;
  p.total_variance = total;
  for (Eigen::Index c = 0; c < 2 && c < sv.size(); ++c) {
    Eigen::VectorXd dir = svd.matrixV().col(c);
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < d; ++j) {
      if (std::abs(dir(j)) > std::abs(dir(arg))) arg = j;
    }
    if (dir(arg) < 0) dir = -dir;
    directions.col(c) = dir;
    p.eigenvalues[std::size_t(c)] = sv(c) * sv(c) / double(n - 1);
  }
  const Eigen::MatrixXd coords = x * directions;
  p.coords.resize(m.rows);
  for (Eigen::Index i = 0; i < n; ++i) p.coords[std::size_t(i)] = {coords(i, 0), coords(i, 1)};
  p.captured_variance_fraction = (p.eigenvalues[0] + p.eigenvalues[1]) / total;
  return p;
}

std::vector<ClusterLabel> cluster_labels(MatrixView m, std::size_t k, const ProbeSet& probes, std::size_t top,
                                         std::uint64_t seed) {
  if (probes.concepts.empty()) throw Error(ErrorCode::EmptySet, "probe set has no concepts");
  probes.validate(m.dim);
  const auto clusters = spherical_kmeans(m, k, seed);
  const auto null = probes.null_view();

  std::vector<ClusterLabel> out(k);
  for (std::size_t i = 0; i < m.rows; ++i) out[clusters.labels[i]].members.push_back(i);
  for (std::size_t c = 0; c < k; ++c) {
    auto& cl = out[c];
    cl.cluster = c;
    cl.size = cl.members.size();
    if (cl.members.empty()) continue;
    EmbeddingMatrix members(m.dim);
    for (std::size_t i : cl.members) members.append(m.row(i));
    const Vector centre = mean_embedding(members);
    if (l2_norm(centre) < 1e-12) continue;
    std::vector<std::pair<std::string, double>> scored;
    for (const auto& concept_ : probes.concepts) {
      scored.emplace_back(concept_.label, alignment(centre, concept_.embedding, null));
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    scored.resize(std::min(top, scored.size()));
    cl.labels = std::move(scored);
  }
  return out;
}

}  // namespace lens
