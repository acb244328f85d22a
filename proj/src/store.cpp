#include "lens/store.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

namespace lens {

static_assert(std::endian::native == std::endian::little, "LensDB blobs are little-endian f32");

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

class MappedFile {
 public:
  explicit MappedFile(const fs::path& path) {
    const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
      ::close(fd);
      throw Error(ErrorCode::IoFailure, "cannot stat " + path.string());
    }
    size_ = std::size_t(st.st_size);
    if (size_ > 0) {
      addr_ = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd, 0);
      if (addr_ == MAP_FAILED) {
        ::close(fd);
        throw Error(ErrorCode::IoFailure, "cannot map " + path.string());
      }
    }
    ::close(fd);
  }
  ~MappedFile() {
    if (addr_ != nullptr && addr_ != MAP_FAILED) ::munmap(addr_, size_);
  }
  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;

  const void* data() const noexcept { return addr_; }
  std::size_t size() const noexcept { return size_; }

 private:
  void* addr_ = nullptr;
  std::size_t size_ = 0;
};

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::size_t parse_index(const std::string& s, const std::string& context) {
  std::size_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::CorruptManifest, context + ": bad index '" + s + "'");
  }
  return v;
}

double parse_double(const std::string& s, const std::string& context) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::CorruptManifest, context + ": bad number '" + s + "'");
  }
  return v;
}

ComponentId id_for_row(const Manifest& m, const LayerDecl& l, std::size_t row) {
  ComponentId id{m.model_id, l.name, row % l.n_components, Sign::positive};
  if (row >= l.n_components) id.sign = Sign::negative;
  return id;
}

// Replaces by rename so live mappings of the old file stay valid.
void write_file_atomic(const fs::path& path, const char* data, std::size_t size) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(data, std::streamsize(size));
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot write " + path.string() + ": " + ec.message());
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  write_file_atomic(path, bytes.data(), bytes.size());
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ordered_json manifest_to_json(const Manifest& m) {
  ordered_json j;
  j["format_version"] = m.format_version;
  j["model_id"] = m.model_id;
  j["foundation_model_id"] = m.foundation_model_id;
  j["dim"] = m.dim;
  j["endianness"] = "little";
  j["dtype"] = "f32";
  j["layers"] = ordered_json::array();
  for (const auto& l : m.layers) {
    ordered_json jl;
    jl["name"] = l.name;
    jl["n_components"] = l.n_components;
    jl["m_examples"] = l.m_examples;
    jl["signed"] = l.is_signed;
    jl["has_example_embeddings"] = l.has_example_embeddings;
    jl["has_activations"] = l.has_activations;
    jl["has_relevance"] = l.has_relevance;
    jl["has_edges"] = l.has_edges;
    if (l.attribution) jl["attribution"] = *l.attribution;
    j["layers"].push_back(std::move(jl));
  }
  j["targets"] = m.targets;
  j["probe_sets"] = m.probe_sets;
  if (m.dataset_note) j["dataset_note"] = *m.dataset_note;
  return j;
}

Manifest manifest_from_json(const ordered_json& j) {
  Manifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    m.model_id = j.at("model_id").get<std::string>();
    m.foundation_model_id = j.at("foundation_model_id").get<std::string>();
    m.dim = j.at("dim").get<std::size_t>();
    if (j.at("endianness").get<std::string>() != "little") {
      throw Error(ErrorCode::CorruptManifest, "endianness must be \"little\"");
    }
    if (j.at("dtype").get<std::string>() != "f32") throw Error(ErrorCode::CorruptManifest, "dtype must be \"f32\"");
    for (const auto& jl : j.at("layers")) {
      LayerDecl l;
      l.name = jl.at("name").get<std::string>();
      l.n_components = jl.at("n_components").get<std::size_t>();
      l.m_examples = jl.at("m_examples").get<std::size_t>();
      l.is_signed = jl.at("signed").get<bool>();
      l.has_example_embeddings = jl.at("has_example_embeddings").get<bool>();
      l.has_activations = jl.at("has_activations").get<bool>();
      l.has_relevance = jl.at("has_relevance").get<bool>();
      l.has_edges = jl.at("has_edges").get<bool>();
      if (jl.contains("attribution")) l.attribution = jl.at("attribution").get<std::string>();
      m.layers.push_back(std::move(l));
    }
    m.targets = j.at("targets").get<std::vector<std::string>>();
    if (j.contains("probe_sets")) m.probe_sets = j.at("probe_sets").get<std::vector<std::string>>();
    if (j.contains("dataset_note")) m.dataset_note = j.at("dataset_note").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptManifest, e.what());
  }
  return m;
}

FloatBuffer map_checked(const fs::path& path, std::size_t expected_bytes) {
  if (!fs::exists(path)) throw Error(ErrorCode::MissingBlob, path.string());
  const auto actual = fs::file_size(path);
  if (actual != expected_bytes) {
    throw Error(ErrorCode::SizeMismatch, path.string() + ": expected " + std::to_string(expected_bytes) +
                                             " bytes, found " + std::to_string(actual));
  }
  return FloatBuffer::map_file(path);
}

}  // namespace

FloatBuffer FloatBuffer::owned(std::vector<float> values) {
  auto holder = std::make_shared<std::vector<float>>(std::move(values));
  FloatBuffer b;
  b.data_ = holder->data();
  b.size_ = holder->size();
  b.keep_alive_ = std::move(holder);
  b.present_ = true;
  return b;
}

FloatBuffer FloatBuffer::map_file(const fs::path& path) {
  auto mapped = std::make_shared<MappedFile>(path);
  if (mapped->size() % sizeof(float) != 0) {
    throw Error(ErrorCode::SizeMismatch, path.string() + ": size is not a multiple of 4");
  }
  FloatBuffer b;
  b.data_ = static_cast<const float*>(mapped->data());
  b.size_ = mapped->size() / sizeof(float);
  b.keep_alive_ = std::move(mapped);
  b.present_ = true;
  return b;
}

std::size_t mean_blob_bytes(const LayerDecl& l, std::size_t dim) { return l.rows() * dim * 4; }
std::size_t example_blob_bytes(const LayerDecl& l, std::size_t dim) { return l.rows() * l.m_examples * dim * 4; }
std::size_t activation_blob_bytes(const LayerDecl& l) { return l.rows() * l.m_examples * 4; }
std::size_t relevance_blob_bytes(const LayerDecl& l, std::size_t targets) { return l.rows() * targets * 4; }

void write_f32_file(const fs::path& path, std::span<const float> values) {
  write_file_atomic(path, reinterpret_cast<const char*>(values.data()), values.size_bytes());
}

LensDB::LensDB(Manifest manifest, std::vector<LayerData> layers, std::vector<ProbeSet> probes,
               std::vector<Thumbnail> thumbnails)
    : manifest_(std::move(manifest)),
      layers_(std::move(layers)),
      probes_(std::move(probes)),
      thumbnails_(std::move(thumbnails)) {
  validate();
}

void LensDB::validate() {
  const auto& m = manifest_;
  if (m.format_version != kFormatVersion) {
    throw Error(ErrorCode::CorruptManifest, "unsupported format_version " + std::to_string(m.format_version));
  }
  if (m.dim == 0) throw Error(ErrorCode::CorruptManifest, "dim must be >= 1");
  if (m.layers.empty()) throw Error(ErrorCode::CorruptManifest, "manifest declares no layers");
  if (layers_.size() != m.layers.size()) throw Error(ErrorCode::CorruptManifest, "layer data does not match manifest");
  std::set<std::string> seen;
  for (const auto& t : m.targets) {
    if (!seen.insert(t).second) throw Error(ErrorCode::CorruptManifest, "duplicate target '" + t + "'");
  }
  seen.clear();
  const std::size_t d = m.dim;
  const std::size_t n_targets = m.targets.size();

  norms_.assign(layers_.size(), {});
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    auto& layer = layers_[li];
    const auto& decl = m.layers[li];
    if (layer.decl.name != decl.name) throw Error(ErrorCode::CorruptManifest, "layer order mismatch");
    layer.decl = decl;
    if (!seen.insert(decl.name).second) throw Error(ErrorCode::CorruptManifest, "duplicate layer '" + decl.name + "'");
    if (decl.name.empty() || decl.name.find_first_of("/\\\t\n") != std::string::npos) {
      throw Error(ErrorCode::CorruptManifest, "invalid layer name '" + decl.name + "'");
    }
    if (decl.n_components == 0) throw Error(ErrorCode::CorruptManifest, decl.name + ": n_components must be >= 1");
    if ((decl.has_example_embeddings || decl.has_activations) && decl.m_examples == 0) {
      throw Error(ErrorCode::CorruptManifest, decl.name + ": m_examples must be >= 1");
    }
    if (decl.has_relevance && n_targets == 0) {
      throw Error(ErrorCode::CorruptManifest, decl.name + ": relevance declared without targets");
    }
    const std::size_t rows = decl.rows();
    auto check_size = [&](const FloatBuffer& b, bool flag, std::size_t expected_bytes, const char* what) {
      if (b.present() != flag) {
        throw Error(ErrorCode::MissingBlob, decl.name + ": " + what + " presence disagrees with manifest flag");
      }
      if (flag && b.size() * 4 != expected_bytes) {
        throw Error(ErrorCode::SizeMismatch, decl.name + ": " + what + " expected " + std::to_string(expected_bytes) +
                                                 " bytes, found " + std::to_string(b.size() * 4));
      }
    };
    check_size(layer.mean_embeddings, true, mean_blob_bytes(decl, d), "embeddings");
    check_size(layer.example_embeddings, decl.has_example_embeddings, example_blob_bytes(decl, d),
               "example_embeddings");
    check_size(layer.activations, decl.has_activations, activation_blob_bytes(decl), "activations");
    check_size(layer.relevance, decl.has_relevance, relevance_blob_bytes(decl, n_targets), "relevance");
    if (!decl.has_edges && !layer.edges.empty()) {
      throw Error(ErrorCode::CorruptManifest, decl.name + ": edges present but has_edges is false");
    }

    const auto means = layer.mean_embeddings.values();
    norms_[li].resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto row = means.subspan(r * d, d);
      try {
        require_valid_vector(row, "embedding");
      } catch (const Error& e) {
        throw Error(e.code(), id_for_row(m, decl, r).str() + ": " + e.detail());
      }
      norms_[li][r] = l2_norm(row);
    }
    if (decl.has_example_embeddings) {
      const auto ex = layer.example_embeddings.values();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < decl.m_examples; ++k) {
          try {
            require_valid_vector(ex.subspan((r * decl.m_examples + k) * d, d), "example embedding");
          } catch (const Error& e) {
            throw Error(e.code(), id_for_row(m, decl, r).str() + " rank " + std::to_string(k) + ": " + e.detail());
          }
        }
      }
    }
    if (decl.has_activations) {
      const auto act = layer.activations.values();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < decl.m_examples; ++k) {
          const float a = act[r * decl.m_examples + k];
          if (!std::isfinite(a)) throw Error(ErrorCode::NonFiniteValue, id_for_row(m, decl, r).str() + " activation");
          if (k > 0 && a > act[r * decl.m_examples + k - 1]) {
            throw Error(ErrorCode::CorruptManifest,
                        id_for_row(m, decl, r).str() + ": example ranks not in descending activation order");
          }
        }
      }
    }
    if (decl.has_relevance) {
      for (float v : layer.relevance.values()) {
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
          throw Error(ErrorCode::CorruptManifest, decl.name + ": relevance entries must lie in [0,1]");
        }
      }
    }
    std::sort(layer.example_meta.begin(), layer.example_meta.end(),
              [](const ExampleMeta& a, const ExampleMeta& b) { return std::tie(a.row, a.rank) < std::tie(b.row, b.rank); });
    for (std::size_t i = 0; i < layer.example_meta.size(); ++i) {
      const auto& em = layer.example_meta[i];
      if (em.row >= rows || (decl.m_examples > 0 && em.rank >= decl.m_examples)) {
        throw Error(ErrorCode::CorruptManifest, decl.name + ": example_meta record out of range");
      }
      if (i > 0 && em.row == layer.example_meta[i - 1].row && em.rank == layer.example_meta[i - 1].rank) {
        throw Error(ErrorCode::CorruptManifest, decl.name + ": duplicate example_meta record");
      }
    }
  }

  // Edges reference components by row, so check them once every layer is known.
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    for (const auto& e : layers_[li].edges) {
      if (e.upper.layer != m.layers[li].name) {
        throw Error(ErrorCode::CorruptManifest, "edge stored under layer '" + m.layers[li].name + "' has upper layer '" +
                                                    e.upper.layer + "'");
      }
      const std::size_t lower_pos = layer_position(e.lower.layer);
      if (lower_pos >= li) {
        throw Error(ErrorCode::CorruptManifest, "edge upper layer must come strictly after lower layer");
      }
      row_of(e.upper);
      row_of(e.lower);
      if (!std::isfinite(e.weight)) throw Error(ErrorCode::NonFiniteValue, "edge weight");
      target_index(e.target);
    }
  }

  if (probes_.size() != m.probe_sets.size()) {
    throw Error(ErrorCode::CorruptManifest, "probe sets do not match manifest probe_sets");
  }
  for (std::size_t i = 0; i < probes_.size(); ++i) {
    if (probes_[i].name != m.probe_sets[i]) throw Error(ErrorCode::CorruptManifest, "probe set order mismatch");
    probes_[i].validate(d);
  }
  std::sort(thumbnails_.begin(), thumbnails_.end(),
            [](const Thumbnail& a, const Thumbnail& b) { return a.relpath < b.relpath; });
}

const LayerData& LensDB::layer(std::string_view name) const { return layers_[layer_position(name)]; }

std::size_t LensDB::layer_position(std::string_view name) const {
  for (std::size_t i = 0; i < manifest_.layers.size(); ++i) {
    if (manifest_.layers[i].name == name) return i;
  }
  throw Error(ErrorCode::UnknownLayer, "no layer '" + std::string(name) + "'");
}

MatrixView LensDB::mean_embeddings(std::size_t layer_pos) const {
  const auto& l = layers_[layer_pos];
  return {l.mean_embeddings.values(), l.decl.rows(), manifest_.dim};
}

ComponentId LensDB::component_at(std::size_t layer_pos, std::size_t row) const {
  return id_for_row(manifest_, manifest_.layers[layer_pos], row);
}

std::size_t LensDB::row_of(const ComponentId& id) const {
  const std::size_t pos = [&] {
    try {
      return layer_position(id.layer);
    } catch (const Error&) {
      throw Error(ErrorCode::UnknownComponent, id.str() + ": unknown layer");
    }
  }();
  const auto& decl = manifest_.layers[pos];
  if (id.index >= decl.n_components) throw Error(ErrorCode::UnknownComponent, id.str() + ": index out of range");
  if (id.sign == Sign::negative) {
    if (!decl.is_signed) throw Error(ErrorCode::UnknownComponent, id.str() + ": layer is not signed");
    return decl.n_components + id.index;
  }
  return id.index;
}

ComponentRecord LensDB::component(const ComponentId& id) const {
  const std::size_t row = row_of(id);
  const std::size_t pos = layer_position(id.layer);
  const auto& l = layers_[pos];
  const auto& decl = l.decl;
  const std::size_t d = manifest_.dim;
  ComponentRecord rec;
  rec.id = component_at(pos, row);
  rec.row = row;
  rec.theta = l.mean_embeddings.values().subspan(row * d, d);
  if (decl.has_example_embeddings) {
    const std::size_t m = decl.m_examples;
    rec.examples = MatrixView{l.example_embeddings.values().subspan(row * m * d, m * d), m, d};
  }
  if (decl.has_activations) {
    rec.activations = l.activations.values().subspan(row * decl.m_examples, decl.m_examples);
  }
  if (decl.has_relevance) {
    const std::size_t t = manifest_.targets.size();
    rec.relevance = l.relevance.values().subspan(row * t, t);
  }
  const auto& meta = l.example_meta;
  const auto lo = std::partition_point(meta.begin(), meta.end(), [&](const ExampleMeta& e) { return e.row < row; });
  const auto hi = std::partition_point(lo, meta.end(), [&](const ExampleMeta& e) { return e.row == row; });
  rec.example_meta = std::span<const ExampleMeta>(lo, hi);
  return rec;
}

std::size_t LensDB::target_index(std::string_view target) const {
  for (std::size_t i = 0; i < manifest_.targets.size(); ++i) {
    if (manifest_.targets[i] == target) return i;
  }
  throw Error(ErrorCode::UnknownTarget, "no target '" + std::string(target) + "'");
}

double LensDB::relevance(std::size_t layer_pos, std::size_t row, std::size_t target) const {
  const auto& l = layers_[layer_pos];
  if (!l.decl.has_relevance) throw Error(ErrorCode::MissingRelevance, "layer '" + l.decl.name + "' has no relevance");
  return l.relevance.values()[row * manifest_.targets.size() + target];
}

const ProbeSet& LensDB::probe_set(std::string_view name) const {
  for (const auto& p : probes_) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::UnknownProbeSet, "no probe set '" + std::string(name) + "'");
}

std::optional<std::vector<std::uint8_t>> LensDB::thumbnail(std::string_view layer, std::size_t row,
                                                           std::size_t rank) const {
  const std::string rel =
      "examples/" + std::string(layer) + "/" + std::to_string(row) + "/" + std::to_string(rank) + ".png";
  auto it = std::lower_bound(thumbnails_.begin(), thumbnails_.end(), rel,
                             [](const Thumbnail& t, const std::string& key) { return t.relpath < key; });
  if (it == thumbnails_.end() || it->relpath != rel) return std::nullopt;
  if (it->source.empty()) return it->bytes;
  return read_bytes(it->source);
}

LensDB LensDB::load(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw Error(ErrorCode::MissingBlob, manifest_path.string());
  Manifest manifest;
  {
    std::ifstream in(manifest_path, std::ios::binary);
    ordered_json j;
    try {
      j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::CorruptManifest, e.what());
    }
    manifest = manifest_from_json(j);
  }
  if (manifest.dim == 0) throw Error(ErrorCode::CorruptManifest, "dim must be >= 1");

  std::vector<LayerData> layers;
  for (const auto& decl : manifest.layers) {
    if (decl.name.empty() || decl.name.find_first_of("/\\") != std::string::npos || decl.name == "." ||
        decl.name == "..") {
      throw Error(ErrorCode::CorruptManifest, "invalid layer name '" + decl.name + "'");
    }
    LayerData l;
    l.decl = decl;
    const std::string file = decl.name + ".f32";
    l.mean_embeddings = map_checked(dir / "embeddings" / file, mean_blob_bytes(decl, manifest.dim));
    if (decl.has_example_embeddings) {
      l.example_embeddings = map_checked(dir / "example_embeddings" / file, example_blob_bytes(decl, manifest.dim));
    }
    if (decl.has_activations) l.activations = map_checked(dir / "activations" / file, activation_blob_bytes(decl));
    if (decl.has_relevance) {
      l.relevance = map_checked(dir / "relevance" / file, relevance_blob_bytes(decl, manifest.targets.size()));
    }
    layers.push_back(std::move(l));
  }

  // Second pass: edges and metadata need every layer declaration.
  for (std::size_t li = 0; li < manifest.layers.size(); ++li) {
    const auto& decl = manifest.layers[li];
    auto& l = layers[li];
    if (decl.has_edges) {
      const fs::path p = dir / "edges" / (decl.name + ".tsv");
      std::ifstream in(p, std::ios::binary);
      if (!in) throw Error(ErrorCode::MissingBlob, p.string());
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_tabs(line);
        const std::string ctx = p.filename().string() + ":" + std::to_string(lineno);
        if (f.size() != 6) throw Error(ErrorCode::CorruptManifest, ctx + ": expected 6 tab-separated fields");
        auto resolve = [&](const std::string& layer_name, const std::string& idx) {
          const auto it = std::find_if(manifest.layers.begin(), manifest.layers.end(),
                                       [&](const LayerDecl& x) { return x.name == layer_name; });
          if (it == manifest.layers.end()) throw Error(ErrorCode::CorruptManifest, ctx + ": unknown layer");
          const std::size_t row = parse_index(idx, ctx);
          if (row >= it->rows()) throw Error(ErrorCode::CorruptManifest, ctx + ": index out of range");
          return id_for_row(manifest, *it, row);
        };
        l.edges.push_back({f[0], resolve(f[1], f[2]), resolve(f[3], f[4]), parse_double(f[5], ctx)});
      }
    }
    const fs::path meta_path = dir / "example_meta" / (decl.name + ".jsonl");
    if (fs::exists(meta_path)) {
      std::ifstream in(meta_path, std::ios::binary);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
          const auto j = nlohmann::json::parse(line);
          ExampleMeta em;
          em.row = j.at("row").get<std::size_t>();
          em.rank = j.at("rank").get<std::size_t>();
          em.sample_id = j.at("sample_id").get<std::string>();
          em.crop_box = j.at("crop_box").get<std::array<std::int64_t, 4>>();
          em.activation = j.at("activation").get<double>();
          l.example_meta.push_back(std::move(em));
        } catch (const nlohmann::json::exception& e) {
          throw Error(ErrorCode::CorruptManifest, meta_path.string() + ": " + e.what());
        }
      }
    }
  }

  std::vector<ProbeSet> probes;
  for (const auto& name : manifest.probe_sets) probes.push_back(read_probe_set(dir / "probes" / (name + ".json")));

  std::vector<Thumbnail> thumbs;
  const fs::path ex_root = dir / "examples";
  if (fs::exists(ex_root)) {
    for (const auto& entry : fs::recursive_directory_iterator(ex_root)) {
      if (!entry.is_regular_file()) continue;
      thumbs.push_back({fs::relative(entry.path(), dir).generic_string(), entry.path(), {}});
    }
  }
  return LensDB(std::move(manifest), std::move(layers), std::move(probes), std::move(thumbs));
}

void LensDB::export_to(const fs::path& dir) const {
  fs::create_directories(dir);
  write_bytes(dir / "manifest.json", manifest_to_json(manifest_).dump(2) + "\n");
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& l = layers_[li];
    const auto& decl = l.decl;
    const std::string file = decl.name + ".f32";
    write_f32_file(dir / "embeddings" / file, l.mean_embeddings.values());
    if (decl.has_example_embeddings) write_f32_file(dir / "example_embeddings" / file, l.example_embeddings.values());
    if (decl.has_activations) write_f32_file(dir / "activations" / file, l.activations.values());
    if (decl.has_relevance) write_f32_file(dir / "relevance" / file, l.relevance.values());
    if (decl.has_edges) {
      std::ostringstream out;
      for (const auto& e : l.edges) {
        out << e.target << '\t' << e.upper.layer << '\t' << row_of(e.upper) << '\t' << e.lower.layer << '\t'
            << row_of(e.lower) << '\t' << format_double(e.weight) << '\n';
      }
      write_bytes(dir / "edges" / (decl.name + ".tsv"), out.str());
    }
    if (!l.example_meta.empty()) {
      std::string out;
      for (const auto& em : l.example_meta) {
        ordered_json j;
        j["row"] = em.row;
        j["rank"] = em.rank;
        j["sample_id"] = em.sample_id;
        j["crop_box"] = em.crop_box;
        j["activation"] = em.activation;
        out += j.dump() + "\n";
      }
      write_bytes(dir / "example_meta" / (decl.name + ".jsonl"), out);
    }
  }
  for (const auto& p : probes_) write_probe_set(p, dir / "probes");
  for (const auto& t : thumbnails_) {
    const fs::path target = dir / t.relpath;
    fs::create_directories(target.parent_path());
    if (t.source.empty()) {
      write_bytes(target, std::string(t.bytes.begin(), t.bytes.end()));
    } else if (fs::weakly_canonical(t.source) != fs::weakly_canonical(target)) {
      fs::copy_file(t.source, target, fs::copy_options::overwrite_existing);
    }
  }
}

}  // namespace lens
