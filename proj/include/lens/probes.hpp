#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lens/core.hpp"

namespace lens {

enum class Validity { valid, spurious, neutral };

std::string_view to_string(Validity v);
Validity parse_validity(std::string_view s);

struct Concept {
  std::string label;
  std::optional<std::string> category;
  Validity validity = Validity::neutral;
  Vector embedding;
  std::vector<std::string> prompts;  // provenance only
};

// Named concept embeddings plus the optional null embedding subtracted during alignment.
struct ProbeSet {
  std::string name;
  std::optional<Vector> null_embedding;
  std::vector<Concept> concepts;

  std::optional<VectorView> null_view() const {
    if (!null_embedding) return std::nullopt;
    return VectorView(*null_embedding);
  }
  std::size_t count(Validity v) const;

  // Checks dims, finiteness, non-zero norms and label uniqueness.
  void validate(std::size_t dim) const;
};

// On disk: <dir>/<name>.json (metadata) and <dir>/<name>.f32 (null row first when
// present, then one row per concept in declaration order; little-endian f32).
void write_probe_set(const ProbeSet& probes, const std::filesystem::path& dir);
ProbeSet read_probe_set(const std::filesystem::path& json_path);

}  // namespace lens
