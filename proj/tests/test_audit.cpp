#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lens/audit.hpp"
#include "lens/fixtures.hpp"
#include "support.hpp"

using namespace lens;
using test::code_of;

namespace {

ComponentId cid(std::string layer, std::size_t index) { return {"explicit", std::move(layer), index, Sign::positive}; }

// Two layers: "low" (3 components) below "high" (2 components), one target "t".
LensDB edge_db(const std::vector<RelevanceEdge>& edges, std::vector<float> low_rel = {0.5f, 0.5f, 0.5f},
               std::vector<float> high_rel = {0.5f, 0.5f}) {
  Manifest manifest;
  manifest.model_id = "explicit";
  manifest.foundation_model_id = "f";
  manifest.dim = 2;
  manifest.targets = {"t"};
  std::vector<LayerData> layers(2);
  const std::vector<std::pair<std::string, std::size_t>> shape{{"low", 3}, {"high", 2}};
  for (std::size_t li = 0; li < 2; ++li) {
    LayerDecl d;
    d.name = shape[li].first;
    d.n_components = shape[li].second;
    d.has_relevance = true;
    d.has_edges = li == 1 && !edges.empty();
    std::vector<float> thetas;
    for (std::size_t r = 0; r < d.n_components; ++r) {
      thetas.push_back(1.0f);
      thetas.push_back(float(r));
    }
    layers[li].decl = d;
    layers[li].mean_embeddings = FloatBuffer::owned(thetas);
    layers[li].relevance = FloatBuffer::owned(li == 0 ? low_rel : high_rel);
    manifest.layers.push_back(d);
  }
  layers[1].edges = edges;
  return LensDB(std::move(manifest), std::move(layers));
}

LabelAssignment tag(std::string layer, std::size_t index, std::optional<std::string> label) {
  return {cid(std::move(layer), index), std::move(label), 0.5, std::nullopt};
}

const GraphNode* find_node(const AttributionGraph& g, const std::string& layer, const std::string& group,
                           std::size_t* at = nullptr) {
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.nodes[i].layer == layer && g.nodes[i].group == group) {
      if (at) *at = i;
      return &g.nodes[i];
    }
  }
  return nullptr;
}

}  // namespace

TEST(Buckets, Examples) {
  EXPECT_EQ(classify(0.1, 0.0), Bucket::valid_only);
  EXPECT_EQ(classify(0.0, 0.1), Bucket::spurious);
  EXPECT_EQ(classify(0.1, 0.1), Bucket::both);
  EXPECT_EQ(classify(0.0, 0.0), Bucket::unexpected);
  EXPECT_EQ(classify(-0.3, -0.1), Bucket::unexpected);
  EXPECT_EQ(classify(0.2, -0.1), Bucket::valid_only);
  EXPECT_EQ(to_string(Bucket::valid_only), "valid_only");
  EXPECT_EQ(to_string(Bucket::unexpected), "unexpected");
}

TEST(Buckets, EveryPairLandsInExactlyTheRuleBucket) {
  fixtures::Rng rng(21);
  for (int i = 0; i < 5000; ++i) {
    const double v = i % 7 == 0 ? 0.0 : rng.uniform(-1, 1);
    const double s = i % 11 == 0 ? 0.0 : rng.uniform(-1, 1);
    const Bucket b = classify(v, s);
    const bool vp = v > 0, sp = s > 0;
    EXPECT_EQ(b == Bucket::both, vp && sp);
    EXPECT_EQ(b == Bucket::valid_only, vp && !sp);
    EXPECT_EQ(b == Bucket::spurious, !vp && sp);
    EXPECT_EQ(b == Bucket::unexpected, !vp && !sp);
  }
}

TEST(RelevanceFilter, DefaultThreshold) {
  EXPECT_DOUBLE_EQ(default_relevance_threshold(2048), 0.01);
  EXPECT_DOUBLE_EQ(default_relevance_threshold(2), 0.025);
  EXPECT_DOUBLE_EQ(default_relevance_threshold(5), 0.01);
  EXPECT_EQ(code_of([] { default_relevance_threshold(0); }), ErrorCode::InvalidArgument);
}

TEST(RelevanceFilter, KeepsValuesAtOrAboveTheCut) {
  const auto db = fixtures::db_from_thetas({{"L", {Vector{1, 0}, Vector{1, 1}, Vector{0, 1}, Vector{1, 2}, Vector{2, 1}}}},
                                           {"ox"}, {{0.027f, 0.028f, 0.0281f, 0.0279f, 0.5f}});
  const auto kept = relevance_filter(db, "ox", "L", 0.028);
  ASSERT_EQ(kept.size(), 3u);
  EXPECT_EQ(kept[0].index, 1u);
  EXPECT_EQ(kept[1].index, 2u);
  EXPECT_EQ(kept[2].index, 4u);
}

TEST(RelevanceFilter, AllZeroRelevanceKeepsNothing) {
  const auto db = fixtures::db_from_thetas({{"L", {Vector{1, 0}, Vector{0, 1}}}}, {"t"}, {{0.0f, 0.0f}});
  EXPECT_TRUE(relevance_filter(db, "t", "L").empty());
}

TEST(RelevanceFilter, Errors) {
  const auto with = fixtures::db_from_thetas({{"L", {Vector{1, 0}}}}, {"t"}, {{0.5f}});
  EXPECT_EQ(code_of([&] { relevance_filter(with, "nope", "L"); }), ErrorCode::UnknownTarget);
  EXPECT_EQ(code_of([&] { relevance_filter(with, "t", "M"); }), ErrorCode::UnknownLayer);
  const auto without = fixtures::db_from_thetas({{"L", {Vector{1, 0}}}}, {"t"});
  EXPECT_EQ(code_of([&] { relevance_filter(without, "t", "L"); }), ErrorCode::MissingRelevance);
}

TEST(RelevanceFilter, RaisingTheCutOnlyRemoves) {
  const auto fx = fixtures::generate({});
  const auto& layer = fx.truth.audit_layer;
  std::vector<ComponentId> prev = relevance_filter(fx.db, "target", layer, 0.0);
  for (double cut = 0.001; cut < 1.1; cut *= 1.7) {
    const auto kept = relevance_filter(fx.db, "target", layer, cut);
    for (const auto& id : kept) EXPECT_NE(std::find(prev.begin(), prev.end(), id), prev.end());
    EXPECT_LE(kept.size(), prev.size());
    prev = kept;
  }
}

TEST(Audit, RecoversPlantedBuckets) {
  for (std::uint64_t seed : {1u, 5u, 9u}) {
    fixtures::SyntheticDbSpec spec;
    spec.seed = seed;
    spec.n_valid = 10;
    spec.n_spurious = 10;
    spec.layers = {{"early", 16}, {"late", 40}};
    const auto fx = fixtures::generate(spec);
    const auto report = audit(fx.db, fx.probes, "target", "late");
    std::size_t relevant = 0;
    for (const auto& b : fx.truth.bucket) relevant += b.has_value();
    ASSERT_EQ(report.rows.size(), relevant);
    for (const auto& row : report.rows) {
      const auto expected = fx.truth.bucket.at(row.component.index);
      ASSERT_TRUE(expected.has_value());
      EXPECT_EQ(row.bucket, *expected) << row.component.str();
    }
    EXPECT_EQ(report.aggregates.counts[std::size_t(Bucket::valid_only)], 10u);
    EXPECT_EQ(report.aggregates.counts[std::size_t(Bucket::spurious)], 10u);
    EXPECT_EQ(prune_candidates(report).size(), 10u);
  }
}

TEST(Audit, AggregatesAreConsistent) {
  const auto fx = fixtures::generate({});
  const auto report = audit(fx.db, fx.probes, "target", fx.truth.audit_layer);
  ASSERT_FALSE(report.rows.empty());
  const auto& agg = report.aggregates;
  EXPECT_EQ(std::accumulate(agg.counts.begin(), agg.counts.end(), std::size_t{0}), report.rows.size());
  EXPECT_NEAR(std::accumulate(agg.relevance_share.begin(), agg.relevance_share.end(), 0.0), 1.0, 1e-12);
  for (std::size_t i = 1; i < report.rows.size(); ++i) EXPECT_GE(report.rows[i - 1].relevance, report.rows[i].relevance);
  for (const auto& row : report.rows) {
    EXPECT_EQ(row.bucket, classify(row.a_valid, row.a_spur));
    EXPECT_GE(row.relevance, report.threshold);
  }
  for (const auto& id : prune_candidates(report)) {
    const auto it = std::find_if(report.rows.begin(), report.rows.end(),
                                 [&](const AuditRow& r) { return r.component == id; });
    ASSERT_NE(it, report.rows.end());
    EXPECT_EQ(it->bucket, Bucket::spurious);
  }
}

TEST(Audit, HigherThresholdGivesASubset) {
  const auto fx = fixtures::generate({});
  const auto low = audit(fx.db, fx.probes, "target", fx.truth.audit_layer, {0.01, false});
  const auto high = audit(fx.db, fx.probes, "target", fx.truth.audit_layer, {0.6, false});
  EXPECT_LE(high.rows.size(), low.rows.size());
  for (const auto& h : high.rows) {
    const auto it = std::find_if(low.rows.begin(), low.rows.end(),
                                 [&](const AuditRow& r) { return r.component == h.component; });
    ASSERT_NE(it, low.rows.end());
    EXPECT_EQ(it->bucket, h.bucket);
  }
}

TEST(Audit, ProbeSetRequirements) {
  const auto fx = fixtures::generate({});
  const auto& layer = fx.truth.audit_layer;

  ProbeSet no_valid = fx.probes;
  std::erase_if(no_valid.concepts, [](const Concept& c) { return c.validity == Validity::valid; });
  EXPECT_EQ(code_of([&] { audit(fx.db, no_valid, "target", layer); }), ErrorCode::NoValidConcepts);

  ProbeSet no_spur = fx.probes;
  std::erase_if(no_spur.concepts, [](const Concept& c) { return c.validity == Validity::spurious; });
  EXPECT_EQ(code_of([&] { audit(fx.db, no_spur, "target", layer); }), ErrorCode::NoSpuriousConcepts);

  ProbeSet no_null = fx.probes;
  no_null.null_embedding.reset();
  EXPECT_EQ(code_of([&] { audit(fx.db, no_null, "target", layer); }), ErrorCode::NullEmbeddingMissing);
  EXPECT_NO_THROW(audit(fx.db, no_null, "target", layer, {std::nullopt, true}));

  EXPECT_EQ(code_of([&] { audit(fx.db, fx.probes, "nope", layer); }), ErrorCode::UnknownTarget);
}

TEST(Phi, Examples) {
  const std::vector<std::vector<double>> r{{0, 1, 2}, {5, 5, 9}};
  EXPECT_DOUBLE_EQ(label_faithfulness_phi(r, {{0, 2}}).mean, 1.0);
  EXPECT_DOUBLE_EQ(label_faithfulness_phi(r, {{0, 0}}).mean, 0.0);
  EXPECT_DOUBLE_EQ(label_faithfulness_phi(r, {{0, 1}}).mean, 0.5);
  const auto two = label_faithfulness_phi(r, {{0, 2}, {1, 0}});
  EXPECT_DOUBLE_EQ(two.mean, 0.5);
  EXPECT_NEAR(two.standard_error, 0.5, 1e-12);
  EXPECT_EQ(label_faithfulness_phi(r, {{0, 1}}).standard_error, 0.0);
}

TEST(Phi, RangeAndAffineInvariance) {
  fixtures::Rng rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<double>> r(4, std::vector<double>(6));
    for (auto& row : r) {
      for (auto& x : row) x = rng.normal();
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < 4; ++i) pairs.emplace_back(i, rng.index(6));
    const auto base = label_faithfulness_phi(r, pairs);
    for (double p : base.per_pair) {
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
    }
    const double a = rng.uniform(0.1, 10), b = rng.uniform(-5, 5);
    auto moved = r;
    for (auto& row : moved) {
      for (auto& x : row) x = a * x + b;
    }
    const auto after = label_faithfulness_phi(moved, pairs);
    for (std::size_t i = 0; i < pairs.size(); ++i) EXPECT_NEAR(after.per_pair[i], base.per_pair[i], 1e-9);
  }
}

TEST(Phi, Errors) {
  EXPECT_EQ(code_of([] { label_faithfulness_phi({{1, 1, 1}}, {{0, 0}}); }), ErrorCode::DegenerateResponse);
  EXPECT_EQ(code_of([] { label_faithfulness_phi({{1, 2}}, {}); }), ErrorCode::EmptySet);
  EXPECT_EQ(code_of([] { label_faithfulness_phi({{1, 2}}, {{1, 0}}); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { label_faithfulness_phi({{1, 2}}, {{0, 2}}); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { label_faithfulness_phi({{1, NAN}}, {{0, 0}}); }), ErrorCode::NonFiniteValue);
}

TEST(Auc, Examples) {
  EXPECT_DOUBLE_EQ(separability_auc({1, 3}, {2}), 0.5);
  EXPECT_DOUBLE_EQ(separability_auc({3, 4}, {1, 2}), 1.0);
  EXPECT_DOUBLE_EQ(separability_auc({1, 2}, {3, 4}), 0.0);
  EXPECT_DOUBLE_EQ(separability_auc({1}, {1}), 0.5);
  const auto c = separability_auc_counts({1, 3}, {2});
  EXPECT_EQ(c.numerator, 2u);
  EXPECT_EQ(c.denominator, 4u);
  EXPECT_EQ(code_of([] { separability_auc({}, {1}); }), ErrorCode::EmptySet);
  EXPECT_EQ(code_of([] { separability_auc({NAN}, {1}); }), ErrorCode::NonFiniteValue);
}

TEST(Auc, MatchesPairCountingAndIsExactlyAntisymmetric) {
  fixtures::Rng rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> p(1 + rng.index(40)), n(1 + rng.index(40));
    // Coarse values so ties are common.
    for (auto& x : p) x = double(rng.index(8));
    for (auto& x : n) x = double(rng.index(8)) - 1.0;
    const auto pn = separability_auc_counts(p, n);
    const auto np = separability_auc_counts(n, p);
    EXPECT_EQ(pn.denominator, np.denominator);
    EXPECT_EQ(pn.numerator + np.numerator, pn.denominator);
    EXPECT_EQ(pn.value() + np.value(), 1.0);
    EXPECT_NEAR(pn.value(), double(fixtures::oracle::pair_counting_auc(p, n)), 1e-12);
  }
}

TEST(Graph, SingleEdge) {
  const auto db = edge_db({{"t", cid("high", 0), cid("low", 0), 0.4}});
  const auto g = build_attribution_graph(db, {tag("high", 0, "dog"), tag("low", 0, "ear")}, "t");
  std::size_t up = 0, lo = 0;
  ASSERT_NE(find_node(g, "high", "dog", &up), nullptr);
  ASSERT_NE(find_node(g, "low", "ear", &lo), nullptr);
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0].upper, up);
  EXPECT_EQ(g.edges[0].lower, lo);
  EXPECT_DOUBLE_EQ(g.edges[0].weight, 0.4);
}

TEST(Graph, SameGroupEdgesAreSummed) {
  const auto db = edge_db({{"t", cid("high", 0), cid("low", 0), 0.2}, {"t", cid("high", 0), cid("low", 1), 0.3}});
  const auto g = build_attribution_graph(
      db, {tag("high", 0, "dog"), tag("low", 0, "ear"), tag("low", 1, "ear")}, "t");
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_DOUBLE_EQ(g.edges[0].weight, 0.5);
  const auto* ear = find_node(g, "low", "ear");
  ASSERT_NE(ear, nullptr);
  EXPECT_EQ(ear->members.size(), 2u);
}

TEST(Graph, UnlabelledComponentsShareTheUnknownGroup) {
  const auto db = edge_db({{"t", cid("high", 1), cid("low", 2), 0.7}, {"t", cid("high", 1), cid("low", 1), 0.1}});
  const auto g = build_attribution_graph(db, {tag("low", 2, std::nullopt)}, "t");
  ASSERT_NE(find_node(g, "high", "?"), nullptr);
  const auto* low = find_node(g, "low", "?");
  ASSERT_NE(low, nullptr);
  EXPECT_EQ(low->members.size(), 2u);
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_NEAR(g.edges[0].weight, 0.8, 1e-12);
}

TEST(Graph, IrrelevantNodesAreDropped) {
  const auto db = edge_db({{"t", cid("high", 0), cid("low", 0), 0.4}, {"t", cid("high", 0), cid("low", 1), 0.9}},
                          {0.5f, 0.001f, 0.5f});
  const auto g = build_attribution_graph(db, {tag("high", 0, "dog"), tag("low", 0, "ear"), tag("low", 1, "fur")}, "t");
  EXPECT_EQ(find_node(g, "low", "fur"), nullptr);
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_DOUBLE_EQ(g.edges[0].weight, 0.4);
}

TEST(Graph, OutputsAndErrors) {
  const auto db = edge_db({{"t", cid("high", 0), cid("low", 0), 0.4}});
  const auto g = build_attribution_graph(db, {tag("high", 0, "dog"), tag("low", 0, "ear")}, "t");
  EXPECT_EQ(graph_edges_tsv(g).substr(0, 19), "upper\tlower\tweight\n");
  EXPECT_NE(graph_nodes_tsv(g).find("dog\thigh"), std::string::npos);
  EXPECT_EQ(graph_dot(g).rfind("digraph", 0), 0u);
  EXPECT_EQ(code_of([&] { build_attribution_graph(db, {}, "x"); }), ErrorCode::UnknownTarget);
  const auto bare = edge_db({});
  EXPECT_EQ(code_of([&] { build_attribution_graph(bare, {}, "t"); }), ErrorCode::MissingEdges);
}
