#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lens/core.hpp"
#include "lens/probes.hpp"

namespace lens {

inline constexpr int kFormatVersion = 1;

struct LayerDecl {
  std::string name;
  std::size_t n_components = 0;
  std::size_t m_examples = 0;
  bool is_signed = false;
  bool has_example_embeddings = false;
  bool has_activations = false;
  bool has_relevance = false;
  bool has_edges = false;
  // Attribution backend tag recorded by the extractor, e.g. "crp_composite".
  std::optional<std::string> attribution;

  // Stored rows: signed layers carry a positive and a negative row per component.
  std::size_t rows() const noexcept { return is_signed ? 2 * n_components : n_components; }
};

struct Manifest {
  int format_version = kFormatVersion;
  std::string model_id;
  std::string foundation_model_id;
  std::size_t dim = 0;
  std::vector<LayerDecl> layers;
  std::vector<std::string> targets;
  std::vector<std::string> probe_sets;
  std::optional<std::string> dataset_note;
};

struct ExampleMeta {
  std::size_t row = 0;
  std::size_t rank = 0;
  std::string sample_id;
  std::array<std::int64_t, 4> crop_box{};  // x0, y0, x1, y1 in pixels
  double activation = 0.0;
};

struct RelevanceEdge {
  std::string target;
  ComponentId upper;
  ComponentId lower;
  double weight = 0.0;
};

// Read-only float storage, either owned or memory-mapped from a blob file.
class FloatBuffer {
 public:
  FloatBuffer() = default;
  static FloatBuffer owned(std::vector<float> values);
  static FloatBuffer map_file(const std::filesystem::path& path);

  bool present() const noexcept { return present_; }
  std::span<const float> values() const noexcept { return {data_, size_}; }
  std::size_t size() const noexcept { return size_; }

 private:
  std::shared_ptr<const void> keep_alive_;
  const float* data_ = nullptr;
  std::size_t size_ = 0;
  bool present_ = false;
};

struct LayerData {
  LayerDecl decl;
  FloatBuffer mean_embeddings;     // rows x d
  FloatBuffer example_embeddings;  // rows x m x d
  FloatBuffer activations;         // rows x m
  FloatBuffer relevance;           // rows x T
  std::vector<ExampleMeta> example_meta;  // sorted by (row, rank)
  std::vector<RelevanceEdge> edges;       // this layer is the upper end
};

struct Thumbnail {
  std::string relpath;  // examples/<layer>/<index>/<rank>.png
  std::filesystem::path source;
  std::vector<std::uint8_t> bytes;  // used when source is empty
};

// A read-only view of one component's stored data.
struct ComponentRecord {
  ComponentId id;
  std::size_t row = 0;
  VectorView theta;
  std::optional<MatrixView> examples;
  std::optional<std::span<const float>> activations;
  std::optional<std::span<const float>> relevance;
  std::span<const ExampleMeta> example_meta;
};

class LensDB {
 public:
  // Validates everything; throws lens::Error on the first violation.
  LensDB(Manifest manifest, std::vector<LayerData> layers, std::vector<ProbeSet> probes = {},
         std::vector<Thumbnail> thumbnails = {});

  static LensDB load(const std::filesystem::path& dir);
  void export_to(const std::filesystem::path& dir) const;

  const Manifest& manifest() const noexcept { return manifest_; }
  std::size_t dim() const noexcept { return manifest_.dim; }
  const std::vector<LayerData>& layers() const noexcept { return layers_; }
  const LayerData& layer(std::string_view name) const;
  std::size_t layer_position(std::string_view name) const;

  MatrixView mean_embeddings(std::size_t layer_pos) const;
  double theta_norm(std::size_t layer_pos, std::size_t row) const { return norms_[layer_pos][row]; }

  ComponentId component_at(std::size_t layer_pos, std::size_t row) const;
  std::size_t row_of(const ComponentId& id) const;
  ComponentRecord component(const ComponentId& id) const;

  std::size_t target_index(std::string_view target) const;
  // Relevance of a stored row for a target; throws MissingRelevance when the layer has none.
  double relevance(std::size_t layer_pos, std::size_t row, std::size_t target) const;

  const std::vector<ProbeSet>& probe_sets() const noexcept { return probes_; }
  const ProbeSet& probe_set(std::string_view name) const;

  const std::vector<Thumbnail>& thumbnails() const noexcept { return thumbnails_; }
  std::optional<std::vector<std::uint8_t>> thumbnail(std::string_view layer, std::size_t row,
                                                     std::size_t rank) const;

 private:
  void validate();

  Manifest manifest_;
  std::vector<LayerData> layers_;
  std::vector<ProbeSet> probes_;
  std::vector<Thumbnail> thumbnails_;
  std::vector<std::vector<double>> norms_;
};

// Expected blob size in bytes for each per-layer file.
std::size_t mean_blob_bytes(const LayerDecl& l, std::size_t dim);
std::size_t example_blob_bytes(const LayerDecl& l, std::size_t dim);
std::size_t activation_blob_bytes(const LayerDecl& l);
std::size_t relevance_blob_bytes(const LayerDecl& l, std::size_t targets);

// Writes raw little-endian f32 values.
void write_f32_file(const std::filesystem::path& path, std::span<const float> values);

}  // namespace lens
