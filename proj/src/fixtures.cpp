#include "lens/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lens::fixtures {

namespace {

// 1x1 grey PNG; the engine treats thumbnails as opaque bytes.
const std::vector<std::uint8_t> kTinyPng = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52, 0x00,
    0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x00, 0x00, 0x00, 0x00, 0x3a, 0x7e, 0x9b, 0x55, 0x00,
    0x00, 0x00, 0x0a, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x68, 0x00, 0x00, 0x00, 0x82, 0x00, 0x81,
    0x77, 0xcd, 0x72, 0xb6, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};

using DVec = std::vector<double>;

double ddot(const DVec& a, const DVec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void axpy(DVec& y, double a, const DVec& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

DVec orthonormalised(DVec v, const std::vector<DVec>& basis) {
  for (const auto& b : basis) axpy(v, -ddot(v, b), b);
  const double n = std::sqrt(ddot(v, v));
  for (double& x : v) x /= n;
  return v;
}

DVec gaussian(Rng& rng, std::size_t dim) {
  DVec v(dim);
  for (double& x : v) x = rng.normal();
  return v;
}

struct Directions {
  DVec valid, spurious, null, neutral, poly_a, poly_b;
  std::vector<DVec> all;
};

Directions make_directions(Rng& rng, std::size_t dim) {
  Directions d;
  for (int i = 0; i < 6; ++i) d.all.push_back(orthonormalised(gaussian(rng, dim), d.all));
  d.valid = d.all[0];
  d.spurious = d.all[1];
  d.null = d.all[2];
  d.neutral = d.all[3];
  d.poly_a = d.all[4];
  d.poly_b = d.all[5];
  return d;
}

DVec background_direction(Rng& rng, const Directions& dirs) {
  return orthonormalised(gaussian(rng, dirs.valid.size()), dirs.all);
}

Vector to_float(const DVec& v) { return Vector(v.begin(), v.end()); }

}  // namespace

double Rng::uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (spare_) {
    const double s = *spare_;
    spare_.reset();
    return s;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

Vector Rng::gaussian_vector(std::size_t dim) {
  Vector v(dim);
  for (float& x : v) x = float(normal());
  return v;
}

Fixture generate(const SyntheticDbSpec& spec) {
  if (spec.dim < 8) throw Error(ErrorCode::InvalidArgument, "synthetic fixtures need dim >= 8");
  if (spec.layers.empty()) throw Error(ErrorCode::InvalidArgument, "synthetic fixtures need a layer");
  if (spec.m_examples == 0) throw Error(ErrorCode::InvalidArgument, "synthetic fixtures need m >= 1");
  const std::size_t planted_total = spec.n_valid + spec.n_spurious + spec.n_both + spec.n_unexpected +
                                    2 * spec.n_duplicate_pairs + spec.n_polysemantic;
  if (planted_total > spec.layers.back().n_components) {
    throw Error(ErrorCode::InvalidArgument, "planted components exceed the last layer size");
  }
  if (spec.n_polysemantic > 0 && spec.m_examples < 2) {
    throw Error(ErrorCode::InvalidArgument, "polysemantic components need m >= 2");
  }

  Rng rng(spec.seed);
  const std::size_t d = spec.dim;
  const std::size_t m = spec.m_examples;
  const Directions dirs = make_directions(rng, d);

  ProbeSet probes;
  probes.name = "audit";
  probes.null_embedding = to_float(dirs.null);
  probes.concepts.push_back({"valid_concept", "object", Validity::valid, to_float(dirs.valid), {"valid_concept"}});
  probes.concepts.push_back(
      {"spurious_concept", "background", Validity::spurious, to_float(dirs.spurious), {"spurious_concept"}});
  probes.concepts.push_back(
      {"neutral_concept", "texture", Validity::neutral, to_float(dirs.neutral), {"neutral_concept"}});

  Manifest manifest;
  manifest.model_id = "synthetic-" + std::to_string(spec.seed);
  manifest.foundation_model_id = "synthetic-foundation";
  manifest.dim = d;
  manifest.targets = spec.targets;
  manifest.probe_sets = {probes.name};
  manifest.dataset_note = "generated test fixture";

  GroundTruth truth;
  truth.audit_layer = spec.layers.back().name;
  std::vector<LayerData> layers;
  std::vector<Thumbnail> thumbnails;
  const std::size_t n_targets = spec.targets.size();

  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const bool last = li + 1 == spec.layers.size();
    LayerDecl decl;
    decl.name = spec.layers[li].name;
    decl.n_components = spec.layers[li].n_components;
    decl.m_examples = m;
    decl.is_signed = spec.signed_first_layer && li == 0;
    decl.has_example_embeddings = spec.with_example_embeddings;
    decl.has_activations = spec.with_activations;
    decl.has_relevance = spec.with_relevance && n_targets > 0;
    decl.has_edges = spec.with_edges && li > 0 && n_targets > 0;
    decl.attribution = "synthetic";
    const std::size_t rows = decl.rows();

    std::vector<Planted> kinds(rows, Planted::background);
    std::vector<std::size_t> twin(rows);
    for (std::size_t r = 0; r < rows; ++r) twin[r] = r;
    if (last) {
      std::size_t r = 0;
      auto plant = [&](std::size_t count, Planted kind) {
        for (std::size_t i = 0; i < count; ++i) kinds[r++] = kind;
      };
      plant(spec.n_valid, Planted::valid);
      plant(spec.n_spurious, Planted::spurious);
      plant(spec.n_both, Planted::both);
      plant(spec.n_unexpected, Planted::unexpected);
      for (std::size_t i = 0; i < spec.n_duplicate_pairs; ++i) {
        kinds[r] = kinds[r + 1] = Planted::duplicate;
        twin[r] = r + 1;
        twin[r + 1] = r;
        r += 2;
      }
      plant(spec.n_polysemantic, Planted::polysemantic);
    }

    std::vector<float> means, examples, activations, relevance;
    std::vector<ExampleMeta> meta;
    std::vector<std::vector<float>> example_cache(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<float> ex;
      if (twin[r] < r) {
        ex = example_cache[twin[r]];
      } else {
        DVec base_a(d, 0.0);
        DVec base_b;
        switch (kinds[r]) {
          case Planted::valid: base_a = dirs.valid; axpy(base_a, 0.3, dirs.null); break;
          case Planted::spurious: base_a = dirs.spurious; axpy(base_a, 0.3, dirs.null); break;
          case Planted::both:
            base_a = dirs.valid;
            axpy(base_a, 0.8, dirs.spurious);
            axpy(base_a, 0.3, dirs.null);
            break;
          case Planted::unexpected: base_a = dirs.neutral; axpy(base_a, 0.3, dirs.null); break;
          case Planted::polysemantic:
            base_a = dirs.poly_a;
            axpy(base_a, 0.3, dirs.null);
            base_b = dirs.poly_b;
            axpy(base_b, 0.3, dirs.null);
            break;
          case Planted::duplicate:
          case Planted::background:
            base_a = background_direction(rng, dirs);
            axpy(base_a, 0.5, dirs.null);
            break;
        }
        for (std::size_t k = 0; k < m; ++k) {
          const DVec& base = (!base_b.empty() && k % 2 == 1) ? base_b : base_a;
          const double scale = rng.uniform(0.8, 1.2);
          for (std::size_t j = 0; j < d; ++j) ex.push_back(float(scale * (base[j] + spec.noise * rng.normal())));
        }
        example_cache[r] = ex;
      }
      const Vector theta = mean_embedding(MatrixView{ex, m, d});
      means.insert(means.end(), theta.begin(), theta.end());
      if (decl.has_example_embeddings) examples.insert(examples.end(), ex.begin(), ex.end());

      std::vector<float> acts(m);
      for (float& a : acts) a = float(rng.uniform(0.0, 10.0));
      std::sort(acts.begin(), acts.end(), std::greater<>());
      if (decl.has_activations) activations.insert(activations.end(), acts.begin(), acts.end());
      if (spec.with_example_meta) {
        for (std::size_t k = 0; k < m; ++k) {
          const auto x0 = std::int64_t(rng.index(100));
          const auto y0 = std::int64_t(rng.index(100));
          meta.push_back({r, k, "sample_" + std::to_string(rng.index(100000)),
                          {x0, y0, x0 + 1 + std::int64_t(rng.index(120)), y0 + 1 + std::int64_t(rng.index(120))},
                          double(acts[k])});
        }
      }
      if (decl.has_relevance) {
        for (std::size_t t = 0; t < n_targets; ++t) {
          double rel = rng.uniform();
          if (last) rel = kinds[r] == Planted::background ? rng.uniform(0.0, 0.004) : rng.uniform(0.3, 1.0);
          relevance.push_back(float(rel));
        }
      }
      if (spec.with_thumbnails) {
        for (std::size_t k = 0; k < std::min<std::size_t>(m, 2); ++k) {
          thumbnails.push_back(
              {"examples/" + decl.name + "/" + std::to_string(r) + "/" + std::to_string(k) + ".png", {}, kTinyPng});
        }
      }
    }

    LayerData layer;
    layer.decl = decl;
    layer.mean_embeddings = FloatBuffer::owned(std::move(means));
    if (decl.has_example_embeddings) layer.example_embeddings = FloatBuffer::owned(std::move(examples));
    if (decl.has_activations) layer.activations = FloatBuffer::owned(std::move(activations));
    if (decl.has_relevance) layer.relevance = FloatBuffer::owned(std::move(relevance));
    layer.example_meta = std::move(meta);
    if (decl.has_edges) {
      const auto& lower = manifest.layers[li - 1];
      for (const auto& target : spec.targets) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (int e = 0; e < 2; ++e) {
            const std::size_t lr = rng.index(lower.rows());
            ComponentId up{manifest.model_id, decl.name, r % decl.n_components,
                           r >= decl.n_components ? Sign::negative : Sign::positive};
            ComponentId lo{manifest.model_id, lower.name, lr % lower.n_components,
                           lr >= lower.n_components ? Sign::negative : Sign::positive};
            layer.edges.push_back({target, up, lo, rng.uniform(0.01, 1.0)});
          }
        }
      }
    }
    manifest.layers.push_back(decl);
    layers.push_back(std::move(layer));

    if (last) {
      truth.planted = kinds;
      truth.duplicate_of = twin;
      truth.example_cluster.assign(rows, std::vector<std::size_t>(m, 0));
      for (std::size_t r = 0; r < rows; ++r) {
        if (kinds[r] != Planted::polysemantic) continue;
        for (std::size_t k = 0; k < m; ++k) truth.example_cluster[r][k] = k % 2;
      }
      truth.label.resize(rows);
      truth.bucket.resize(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        switch (kinds[r]) {
          case Planted::valid: truth.label[r] = "valid_concept"; truth.bucket[r] = Bucket::valid_only; break;
          case Planted::spurious: truth.label[r] = "spurious_concept"; truth.bucket[r] = Bucket::spurious; break;
          case Planted::both: truth.label[r] = "valid_concept"; truth.bucket[r] = Bucket::both; break;
          case Planted::unexpected: truth.label[r] = "neutral_concept"; truth.bucket[r] = Bucket::unexpected; break;
          case Planted::duplicate:
          case Planted::polysemantic: truth.bucket[r] = Bucket::unexpected; break;
          case Planted::background: break;
        }
      }
      if (rows >= 2 && std::all_of(kinds.begin(), kinds.end(), [](Planted p) { return p == Planted::duplicate; })) {
        truth.redundancy = 1.0;
      }
    }
  }

  LensDB db(std::move(manifest), std::move(layers), {probes}, std::move(thumbnails));
  return {std::move(db), std::move(probes), std::move(truth)};
}

LensDB orthogonal_pairs_db(std::size_t n_components, std::size_t dim) {
  if (dim < 2) throw Error(ErrorCode::InvalidArgument, "orthogonal pairs need dim >= 2");
  Manifest manifest;
  manifest.model_id = "orthogonal-pairs";
  manifest.foundation_model_id = "synthetic-foundation";
  manifest.dim = dim;
  LayerDecl decl;
  decl.name = "L";
  decl.n_components = n_components;
  decl.m_examples = 2;
  decl.has_example_embeddings = true;
  std::vector<float> means, examples;
  for (std::size_t k = 0; k < n_components; ++k) {
    std::vector<float> a(dim, 0.0f), b(dim, 0.0f);
    a[(2 * k) % dim] = 1.0f;
    b[(2 * k + 1) % dim] = 1.0f;
    examples.insert(examples.end(), a.begin(), a.end());
    examples.insert(examples.end(), b.begin(), b.end());
    for (std::size_t j = 0; j < dim; ++j) means.push_back(0.5f * (a[j] + b[j]));
  }
  LayerData layer;
  layer.decl = decl;
  layer.mean_embeddings = FloatBuffer::owned(std::move(means));
  layer.example_embeddings = FloatBuffer::owned(std::move(examples));
  manifest.layers.push_back(decl);
  std::vector<LayerData> layers;
  layers.push_back(std::move(layer));
  return LensDB(std::move(manifest), std::move(layers));
}

LensDB db_from_thetas(const std::vector<std::pair<std::string, std::vector<Vector>>>& layer_rows,
                      std::vector<std::string> targets, std::vector<std::vector<float>> relevance) {
  if (layer_rows.empty() || layer_rows.front().second.empty()) {
    throw Error(ErrorCode::InvalidArgument, "db_from_thetas needs rows");
  }
  Manifest manifest;
  manifest.model_id = "explicit";
  manifest.foundation_model_id = "synthetic-foundation";
  manifest.dim = layer_rows.front().second.front().size();
  manifest.targets = std::move(targets);
  std::vector<LayerData> layers;
  for (std::size_t li = 0; li < layer_rows.size(); ++li) {
    const auto& [name, rows] = layer_rows[li];
    LayerDecl decl;
    decl.name = name;
    decl.n_components = rows.size();
    decl.has_relevance = li < relevance.size() && !relevance[li].empty();
    std::vector<float> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    LayerData layer;
    layer.decl = decl;
    layer.mean_embeddings = FloatBuffer::owned(std::move(flat));
    if (decl.has_relevance) layer.relevance = FloatBuffer::owned(relevance[li]);
    manifest.layers.push_back(decl);
    layers.push_back(std::move(layer));
  }
  return LensDB(std::move(manifest), std::move(layers));
}

namespace oracle {

long double cosine(VectorView x, VectorView y) {
  long double xy = 0, xx = 0, yy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xy += (long double)x[i] * y[i];
    xx += (long double)x[i] * x[i];
    yy += (long double)y[i] * y[i];
  }
  return xy / (std::sqrt(xx) * std::sqrt(yy));
}

std::vector<ScoredComponent> exhaustive_search(const LensDB& db, VectorView probe, std::optional<VectorView> null) {
  std::vector<ScoredComponent> all;
  for (std::size_t li = 0; li < db.layers().size(); ++li) {
    const auto thetas = db.mean_embeddings(li);
    for (std::size_t r = 0; r < thetas.rows; ++r) {
      long double s = cosine(probe, thetas.row(r));
      if (null) s -= cosine(*null, thetas.row(r));
      all.push_back({db.component_at(li, r), s});
    }
  }
  // Stable sort keeps (layer, row) order among equal scores.
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  return all;
}

long double pairwise_clarity(MatrixView v) {
  long double acc = 0;
  for (std::size_t i = 0; i < v.rows; ++i) {
    for (std::size_t j = 0; j < v.rows; ++j) {
      if (i != j) acc += cosine(v.row(i), v.row(j));
    }
  }
  const long double n = v.rows;
  return acc / (n * (n - 1));
}

long double pair_counting_auc(const std::vector<double>& positive, const std::vector<double>& negative) {
  long double wins = 0;
  for (double p : positive) {
    for (double n : negative) {
      if (p > n) wins += 1;
      else if (p == n) wins += 0.5L;
    }
  }
  return wins / ((long double)positive.size() * negative.size());
}

}  // namespace oracle

}  // namespace lens::fixtures
