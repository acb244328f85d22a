#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "lens/fixtures.hpp"
#include "lens/probes.hpp"
#include "lens/store.hpp"
#include "support.hpp"

using namespace lens;
using test::code_of;
using test::TempDir;
namespace fs = std::filesystem;

namespace {

fixtures::SyntheticDbSpec rich_spec(std::uint64_t seed) {
  fixtures::SyntheticDbSpec spec;
  spec.seed = seed;
  spec.dim = 16;
  spec.m_examples = 4;
  spec.layers = {{"block1", 6}, {"block2", 5}, {"head", 14}};
  spec.targets = {"ox", "cart"};
  spec.signed_first_layer = true;
  spec.with_thumbnails = true;
  return spec;
}

void truncate_by_one(const fs::path& p) { fs::resize_file(p, fs::file_size(p) - 1); }

}  // namespace

TEST(BlobSizes, FollowTheLayout) {
  LayerDecl l;
  l.name = "features";
  l.n_components = 2048;
  EXPECT_EQ(mean_blob_bytes(l, 512), 4194304u);
  l.n_components = 10;
  EXPECT_EQ(relevance_blob_bytes(l, 3), 120u);
  l.m_examples = 30;
  EXPECT_EQ(example_blob_bytes(l, 8), 10u * 30 * 8 * 4);
  EXPECT_EQ(activation_blob_bytes(l), 10u * 30 * 4);
  l.is_signed = true;
  EXPECT_EQ(mean_blob_bytes(l, 8), 20u * 8 * 4);
}

TEST(Store, ExportLoadExportIsByteIdentical) {
  const auto fx = fixtures::generate(rich_spec(3));
  TempDir a, b, c;
  fx.db.export_to(a.path());
  const auto loaded = LensDB::load(a.path());
  loaded.export_to(b.path());
  fx.db.export_to(c.path());
  const auto sa = test::snapshot(a.path());
  EXPECT_EQ(sa, test::snapshot(b.path()));
  EXPECT_EQ(sa, test::snapshot(c.path()));
  EXPECT_TRUE(sa.count("manifest.json"));
  EXPECT_TRUE(sa.count("embeddings/head.f32"));
  EXPECT_TRUE(sa.count("edges/head.tsv"));
  EXPECT_TRUE(sa.count("probes/audit.json"));
  EXPECT_TRUE(sa.count("probes/audit.f32"));
  EXPECT_TRUE(sa.count("example_meta/head.jsonl"));
  EXPECT_TRUE(sa.count("examples/head/0/0.png"));
  EXPECT_FALSE(sa.count("edges/block1.tsv"));
}

TEST(Store, ReloadingAnExportInPlaceKeepsBytes) {
  const auto fx = fixtures::generate(rich_spec(4));
  TempDir a;
  fx.db.export_to(a.path());
  const auto before = test::snapshot(a.path());
  LensDB::load(a.path()).export_to(a.path());
  EXPECT_EQ(before, test::snapshot(a.path()));
}

TEST(Store, LoadedBlobsMatchSource) {
  const auto fx = fixtures::generate(rich_spec(5));
  TempDir a;
  fx.db.export_to(a.path());
  const auto db = LensDB::load(a.path());
  ASSERT_EQ(db.layers().size(), fx.db.layers().size());
  for (std::size_t li = 0; li < db.layers().size(); ++li) {
    const auto& x = db.layers()[li];
    const auto& y = fx.db.layers()[li];
    EXPECT_TRUE(std::equal(x.mean_embeddings.values().begin(), x.mean_embeddings.values().end(),
                           y.mean_embeddings.values().begin(), y.mean_embeddings.values().end()));
    EXPECT_EQ(x.edges.size(), y.edges.size());
    for (std::size_t e = 0; e < x.edges.size(); ++e) {
      EXPECT_EQ(x.edges[e].upper, y.edges[e].upper);
      EXPECT_EQ(x.edges[e].lower, y.edges[e].lower);
      EXPECT_EQ(x.edges[e].weight, y.edges[e].weight);
    }
    EXPECT_EQ(x.example_meta.size(), y.example_meta.size());
  }
  EXPECT_EQ(db.probe_sets().size(), 1u);
  EXPECT_EQ(db.probe_sets()[0].concepts.size(), fx.probes.concepts.size());
  EXPECT_EQ(*db.probe_sets()[0].null_embedding, *fx.probes.null_embedding);
  EXPECT_EQ(db.thumbnails().size(), fx.db.thumbnails().size());
  EXPECT_EQ(db.thumbnail("head", 0, 1), fx.db.thumbnail("head", 0, 1));
  EXPECT_FALSE(db.thumbnail("head", 0, 3).has_value());
}

TEST(Store, SizeMismatchIsAlwaysRejected) {
  const auto fx = fixtures::generate(rich_spec(6));
  TempDir a;
  fx.db.export_to(a.path());
  for (const char* dir : {"embeddings", "example_embeddings", "activations", "relevance"}) {
    for (const char* layer : {"block1", "head"}) {
      TempDir copy;
      fs::copy(a.path(), copy.path(), fs::copy_options::recursive | fs::copy_options::overwrite_existing);
      const auto blob = copy / (std::string(dir) + "/" + layer + ".f32");
      truncate_by_one(blob);
      EXPECT_EQ(code_of([&] { LensDB::load(copy.path()); }), ErrorCode::SizeMismatch) << blob;
      test::write_file(blob, test::read_file(a / (std::string(dir) + "/" + layer + ".f32")) + std::string(4, '\0'));
      EXPECT_EQ(code_of([&] { LensDB::load(copy.path()); }), ErrorCode::SizeMismatch) << blob;
    }
  }
}

TEST(Store, MissingPiecesAreReported) {
  const auto fx = fixtures::generate(rich_spec(7));
  TempDir a;
  fx.db.export_to(a.path());
  {
    TempDir copy;
    fs::copy(a.path(), copy.path(), fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    fs::remove(copy / "relevance/head.f32");
    EXPECT_EQ(code_of([&] { LensDB::load(copy.path()); }), ErrorCode::MissingBlob);
  }
  {
    TempDir copy;
    fs::copy(a.path(), copy.path(), fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    fs::remove(copy / "edges/head.tsv");
    EXPECT_EQ(code_of([&] { LensDB::load(copy.path()); }), ErrorCode::MissingBlob);
  }
  TempDir empty;
  EXPECT_EQ(code_of([&] { LensDB::load(empty.path()); }), ErrorCode::MissingBlob);
}

TEST(Store, CorruptManifestIsRejected) {
  const auto fx = fixtures::generate(rich_spec(8));
  TempDir a;
  fx.db.export_to(a.path());
  const std::string original = test::read_file(a / "manifest.json");
  auto with_manifest = [&](const std::string& text) {
    test::write_file(a / "manifest.json", text);
    return code_of([&] { LensDB::load(a.path()); });
  };
  EXPECT_EQ(with_manifest("{not json"), ErrorCode::CorruptManifest);
  EXPECT_EQ(with_manifest("{}"), ErrorCode::CorruptManifest);
  auto replaced = [&](const std::string& from, const std::string& to) {
    std::string s = original;
    const auto pos = s.find(from);
    EXPECT_NE(pos, std::string::npos) << from;
    return s.replace(pos, from.size(), to);
  };
  EXPECT_EQ(with_manifest(replaced("\"format_version\": 1", "\"format_version\": 2")), ErrorCode::CorruptManifest);
  EXPECT_EQ(with_manifest(replaced("\"little\"", "\"big\"")), ErrorCode::CorruptManifest);
  EXPECT_EQ(with_manifest(replaced("\"dim\": 16", "\"dim\": 15")), ErrorCode::SizeMismatch);
  test::write_file(a / "manifest.json", original);
  EXPECT_NO_THROW(LensDB::load(a.path()));
}

TEST(Store, DescendingActivationsAreEnforced) {
  const auto fx = fixtures::generate(rich_spec(9));
  TempDir a;
  fx.db.export_to(a.path());
  auto bytes = test::read_file(a / "activations/head.f32");
  float first = 0, second = 0;
  std::memcpy(&first, bytes.data(), 4);
  std::memcpy(&second, bytes.data() + 4, 4);
  ASSERT_GT(first, second);
  std::memcpy(bytes.data(), &second, 4);
  std::memcpy(bytes.data() + 4, &first, 4);
  test::write_file(a / "activations/head.f32", bytes);
  EXPECT_EQ(code_of([&] { LensDB::load(a.path()); }), ErrorCode::CorruptManifest);
}

TEST(Store, RowValidation) {
  auto db_with = [](Vector row) {
    return fixtures::db_from_thetas({{"L", {Vector{1, 0, 0}, std::move(row)}}});
  };
  EXPECT_NO_THROW(db_with({0, 1, 0}));
  EXPECT_EQ(code_of([&] { db_with({0, 0, 0}); }), ErrorCode::ZeroNormVector);
  EXPECT_EQ(code_of([&] { db_with({1e-13f, 0, 0}); }), ErrorCode::ZeroNormVector);
  EXPECT_EQ(code_of([&] { db_with({NAN, 0, 0}); }), ErrorCode::NonFiniteValue);
  EXPECT_EQ(code_of([&] { db_with({INFINITY, 0, 0}); }), ErrorCode::NonFiniteValue);
  EXPECT_EQ(code_of([] {
              fixtures::db_from_thetas({{"L", {Vector{1, 0}, Vector{0, 1}}}}, {"t"}, {{0.5f, 1.5f}});
            }),
            ErrorCode::CorruptManifest);
}

TEST(Store, ComponentViews) {
  const auto db = fixtures::db_from_thetas({{"L", {Vector{1, 0}, Vector{0, 2}}}});
  const auto rec = db.component({"explicit", "L", 0, Sign::positive});
  EXPECT_EQ(rec.row, 0u);
  EXPECT_EQ(rec.theta[0], 1.0f);
  EXPECT_FALSE(rec.examples.has_value());
  EXPECT_FALSE(rec.activations.has_value());
  EXPECT_FALSE(rec.relevance.has_value());
  EXPECT_TRUE(rec.example_meta.empty());
  EXPECT_EQ(code_of([&] { db.component({"explicit", "L", 2, Sign::positive}); }), ErrorCode::UnknownComponent);
  EXPECT_EQ(code_of([&] { db.component({"explicit", "L", 0, Sign::negative}); }), ErrorCode::UnknownComponent);
  EXPECT_EQ(code_of([&] { db.component({"explicit", "M", 0, Sign::positive}); }), ErrorCode::UnknownComponent);
  EXPECT_EQ(code_of([&] { db.layer_position("M"); }), ErrorCode::UnknownLayer);
  EXPECT_DOUBLE_EQ(db.theta_norm(0, 1), 2.0);
}

TEST(Store, SignedLayersStoreNegativeRowsAfterPositiveOnes) {
  const auto fx = fixtures::generate(rich_spec(10));
  const auto& decl = fx.db.manifest().layers[0];
  ASSERT_TRUE(decl.is_signed);
  const ComponentId neg{fx.db.manifest().model_id, decl.name, 2, Sign::negative};
  EXPECT_EQ(fx.db.row_of(neg), decl.n_components + 2);
  EXPECT_EQ(fx.db.component_at(0, decl.n_components + 2), neg);
  EXPECT_EQ(neg.str(), "block1/2-");
}

TEST(Store, StoredMeansMatchExampleMeans) {
  const auto fx = fixtures::generate(rich_spec(11));
  for (std::size_t li = 0; li < fx.db.layers().size(); ++li) {
    for (std::size_t r = 0; r < fx.db.manifest().layers[li].rows(); ++r) {
      const auto rec = fx.db.component(fx.db.component_at(li, r));
      ASSERT_TRUE(rec.examples.has_value());
      const auto mean = mean_embedding(*rec.examples);
      for (std::size_t j = 0; j < mean.size(); ++j) EXPECT_NEAR(rec.theta[j], mean[j], 1e-5);
      ASSERT_EQ(rec.example_meta.size(), fx.db.manifest().layers[li].m_examples);
      for (std::size_t k = 0; k < rec.example_meta.size(); ++k) {
        EXPECT_EQ(rec.example_meta[k].row, r);
        EXPECT_EQ(rec.example_meta[k].rank, k);
      }
    }
  }
}

TEST(Store, EmptyOptionalSectionsAreOmitted) {
  fixtures::SyntheticDbSpec spec;
  spec.with_example_embeddings = false;
  spec.with_activations = false;
  spec.with_relevance = false;
  spec.with_edges = false;
  spec.with_example_meta = false;
  spec.targets = {};
  spec.layers = {{"a", 3}, {"b", 14}};
  const auto fx = fixtures::generate(spec);
  TempDir a;
  fx.db.export_to(a.path());
  const auto snap = test::snapshot(a.path());
  for (const auto& [path, _] : snap) {
    EXPECT_TRUE(path == "manifest.json" || path.rfind("embeddings/", 0) == 0 || path.rfind("probes/", 0) == 0)
        << path;
  }
  const auto db = LensDB::load(a.path());
  for (const auto& l : db.manifest().layers) {
    EXPECT_FALSE(l.has_example_embeddings);
    EXPECT_FALSE(l.has_activations);
    EXPECT_FALSE(l.has_relevance);
    EXPECT_FALSE(l.has_edges);
  }
}

TEST(Store, BlobsAreMemoryMappedAndOutliveTheirDirectory) {
  const auto fx = fixtures::generate(rich_spec(12));
  std::optional<LensDB> db;
  {
    TempDir a;
    fx.db.export_to(a.path());
    db.emplace(LensDB::load(a.path()));
  }
  const auto a = db->mean_embeddings(2);
  const auto b = fx.db.mean_embeddings(2);
  EXPECT_TRUE(std::equal(a.values.begin(), a.values.end(), b.values.begin(), b.values.end()));
}

TEST(Store, EdgesMustPointDownwards) {
  Manifest m;
  m.model_id = "x";
  m.dim = 2;
  m.targets = {"t"};
  LayerDecl lo{"lo", 1, 0, false, false, false, false, false, std::nullopt};
  LayerDecl hi{"hi", 1, 0, false, false, false, false, true, std::nullopt};
  m.layers = {lo, hi};
  auto make = [&](ComponentId upper, ComponentId lower) {
    std::vector<LayerData> layers(2);
    layers[0].decl = lo;
    layers[0].mean_embeddings = FloatBuffer::owned({1, 0});
    layers[1].decl = hi;
    layers[1].mean_embeddings = FloatBuffer::owned({0, 1});
    layers[1].edges.push_back({"t", upper, lower, 0.5});
    return LensDB(m, std::move(layers));
  };
  EXPECT_NO_THROW(make({"x", "hi", 0}, {"x", "lo", 0}));
  EXPECT_EQ(code_of([&] { make({"x", "hi", 0}, {"x", "hi", 0}); }), ErrorCode::CorruptManifest);
  EXPECT_EQ(code_of([&] { make({"x", "hi", 0}, {"x", "lo", 4}); }), ErrorCode::UnknownComponent);
}

TEST(ProbeSets, RoundTrip) {
  ProbeSet p;
  p.name = "ox";
  p.null_embedding = Vector{0.1f, 0.2f, 0.3f};
  p.concepts.push_back({"curved horns", "breed", Validity::valid, {1, 0, 0}, {"a photo of curved horns"}});
  p.concepts.push_back({"palm tree", std::nullopt, Validity::spurious, {0, 1, 0}, {}});
  TempDir dir;
  write_probe_set(p, dir.path());
  const auto q = read_probe_set(dir / "ox.json");
  EXPECT_EQ(q.name, p.name);
  EXPECT_EQ(q.null_embedding, p.null_embedding);
  ASSERT_EQ(q.concepts.size(), 2u);
  EXPECT_EQ(q.concepts[0].label, "curved horns");
  EXPECT_EQ(q.concepts[0].category, std::optional<std::string>("breed"));
  EXPECT_EQ(q.concepts[1].category, std::nullopt);
  EXPECT_EQ(q.concepts[1].validity, Validity::spurious);
  EXPECT_EQ(q.concepts[0].prompts, p.concepts[0].prompts);
  EXPECT_EQ(q.concepts[1].embedding, p.concepts[1].embedding);
  EXPECT_EQ(test::read_file(dir / "ox.f32").size(), 3u * 3 * 4);

  truncate_by_one(dir / "ox.f32");
  EXPECT_EQ(code_of([&] { read_probe_set(dir / "ox.json"); }), ErrorCode::SizeMismatch);
  fs::remove(dir / "ox.f32");
  EXPECT_EQ(code_of([&] { read_probe_set(dir / "ox.json"); }), ErrorCode::MissingBlob);
}

TEST(ProbeSets, Validation) {
  ProbeSet p;
  p.name = "x";
  p.concepts.push_back({"a", std::nullopt, Validity::valid, {1, 0}, {}});
  p.concepts.push_back({"a", std::nullopt, Validity::spurious, {0, 1}, {}});
  EXPECT_EQ(code_of([&] { p.validate(2); }), ErrorCode::InvalidArgument);
  p.concepts[1].label = "b";
  EXPECT_NO_THROW(p.validate(2));
  EXPECT_EQ(code_of([&] { p.validate(3); }), ErrorCode::DimensionMismatch);
  p.concepts[1].embedding = {0, 0};
  EXPECT_EQ(code_of([&] { p.validate(2); }), ErrorCode::ZeroNormVector);
  EXPECT_EQ(parse_validity("spurious"), Validity::spurious);
  EXPECT_EQ(code_of([] { parse_validity("maybe"); }), ErrorCode::InvalidArgument);
}
