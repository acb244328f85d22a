#include "lens/probes.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "lens/store.hpp"

namespace lens {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(Validity v) {
  switch (v) {
    case Validity::valid: return "valid";
    case Validity::spurious: return "spurious";
    case Validity::neutral: return "neutral";
  }
  return "neutral";
}

Validity parse_validity(std::string_view s) {
  if (s == "valid") return Validity::valid;
  if (s == "spurious") return Validity::spurious;
  if (s == "neutral") return Validity::neutral;
  throw Error(ErrorCode::InvalidArgument, "unknown validity '" + std::string(s) + "'");
}

std::size_t ProbeSet::count(Validity v) const {
  std::size_t n = 0;
  for (const auto& c : concepts) n += c.validity == v;
  return n;
}

void ProbeSet::validate(std::size_t dim) const {
  std::set<std::string> labels;
  if (null_embedding) {
    if (null_embedding->size() != dim) {
      throw Error(ErrorCode::DimensionMismatch, "probe set '" + name + "': null embedding dim");
    }
    require_valid_vector(*null_embedding, "probe set '" + name + "' null embedding");
  }
  for (const auto& c : concepts) {
    if (c.embedding.size() != dim) {
      throw Error(ErrorCode::DimensionMismatch, "probe set '" + name + "': concept '" + c.label + "' dim");
    }
    require_valid_vector(c.embedding, "probe '" + c.label + "'");
    if (!labels.insert(c.label).second) {
      throw Error(ErrorCode::InvalidArgument, "probe set '" + name + "': duplicate label '" + c.label + "'");
    }
  }
}

void write_probe_set(const ProbeSet& probes, const fs::path& dir) {
  if (probes.concepts.empty()) throw Error(ErrorCode::EmptySet, "probe set has no concepts");
  const std::size_t dim = probes.concepts.front().embedding.size();
  ordered_json meta;
  meta["name"] = probes.name;
  meta["dim"] = dim;
  meta["has_null"] = probes.null_embedding.has_value();
  meta["concepts"] = ordered_json::array();
  std::vector<float> blob;
  if (probes.null_embedding) blob.insert(blob.end(), probes.null_embedding->begin(), probes.null_embedding->end());
  for (const auto& c : probes.concepts) {
    ordered_json jc;
    jc["label"] = c.label;
    jc["category"] = c.category ? ordered_json(*c.category) : ordered_json(nullptr);
    jc["validity"] = to_string(c.validity);
    jc["prompts"] = c.prompts;
    meta["concepts"].push_back(std::move(jc));
    blob.insert(blob.end(), c.embedding.begin(), c.embedding.end());
  }
  fs::create_directories(dir);
  std::ofstream out(dir / (probes.name + ".json"), std::ios::binary);
  out << meta.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write probe set '" + probes.name + "'");
  write_f32_file(dir / (probes.name + ".f32"), blob);
}

ProbeSet read_probe_set(const fs::path& json_path) {
  std::ifstream in(json_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingBlob, "probe set file " + json_path.string());
  ProbeSet probes;
  std::size_t dim = 0;
  bool has_null = false;
  ordered_json meta;
  try {
    meta = ordered_json::parse(in);
    probes.name = meta.at("name").get<std::string>();
    dim = meta.at("dim").get<std::size_t>();
    has_null = meta.at("has_null").get<bool>();
    for (const auto& jc : meta.at("concepts")) {
      Concept c;
      c.label = jc.at("label").get<std::string>();
      if (jc.contains("category") && !jc.at("category").is_null()) c.category = jc.at("category").get<std::string>();
      c.validity = parse_validity(jc.at("validity").get<std::string>());
      if (jc.contains("prompts")) c.prompts = jc.at("prompts").get<std::vector<std::string>>();
      probes.concepts.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptManifest, "probe set " + json_path.string() + ": " + e.what());
  }
  if (dim == 0) throw Error(ErrorCode::CorruptManifest, "probe set dim must be >= 1");

  fs::path blob_path = json_path;
  blob_path.replace_extension(".f32");
  if (!fs::exists(blob_path)) throw Error(ErrorCode::MissingBlob, blob_path.string());
  const std::size_t rows = probes.concepts.size() + (has_null ? 1 : 0);
  const std::size_t expected = rows * dim * sizeof(float);
  if (fs::file_size(blob_path) != expected) {
    throw Error(ErrorCode::SizeMismatch, blob_path.string() + ": expected " + std::to_string(expected) + " bytes");
  }
  std::vector<float> blob(rows * dim);
  std::ifstream bin(blob_path, std::ios::binary);
  bin.read(reinterpret_cast<char*>(blob.data()), std::streamsize(expected));
  if (!bin) throw Error(ErrorCode::IoFailure, "cannot read " + blob_path.string());

  std::size_t offset = 0;
  if (has_null) {
    probes.null_embedding = Vector(blob.begin(), blob.begin() + std::ptrdiff_t(dim));
    offset = dim;
  }
  for (auto& c : probes.concepts) {
    c.embedding.assign(blob.begin() + std::ptrdiff_t(offset), blob.begin() + std::ptrdiff_t(offset + dim));
    offset += dim;
  }
  probes.validate(dim);
  return probes;
}

}  // namespace lens
