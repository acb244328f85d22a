#include "lens/core.hpp"

#include <cmath>
#include <string>

namespace lens {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroNormVector: return "ZeroNormVector";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::SingletonSet: return "SingletonSet";
    case ErrorCode::MissingBlob: return "MissingBlob";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::CorruptManifest: return "CorruptManifest";
    case ErrorCode::UnknownComponent: return "UnknownComponent";
    case ErrorCode::UnknownLayer: return "UnknownLayer";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::EmptyLayerFilter: return "EmptyLayerFilter";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::MissingRelevance: return "MissingRelevance";
    case ErrorCode::UnknownTarget: return "UnknownTarget";
    case ErrorCode::UnknownProbeSet: return "UnknownProbeSet";
    case ErrorCode::NoValidConcepts: return "NoValidConcepts";
    case ErrorCode::NoSpuriousConcepts: return "NoSpuriousConcepts";
    case ErrorCode::NullEmbeddingMissing: return "NullEmbeddingMissing";
    case ErrorCode::DegenerateResponse: return "DegenerateResponse";
    case ErrorCode::MissingEdges: return "MissingEdges";
    case ErrorCode::UpstreamUnavailable: return "UpstreamUnavailable";
    case ErrorCode::DimMismatchFromUpstream: return "DimMismatchFromUpstream";
    case ErrorCode::BindFailure: return "BindFailure";
    case ErrorCode::LoadFailure: return "LoadFailure";
    case ErrorCode::UnknownDatabase: return "UnknownDatabase";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

EmbeddingMatrix::EmbeddingMatrix(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "embedding dimension must be >= 1");
}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> values,
                                 std::vector<std::string> row_ids)
    : rows_(rows), dim_(dim), values_(std::move(values)), row_ids_(std::move(row_ids)) {
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "embedding dimension must be >= 1");
  if (values_.size() != rows * dim) {
    throw Error(ErrorCode::DimensionMismatch, "matrix values do not match rows x dim");
  }
  if (row_ids_.empty()) {
    row_ids_.reserve(rows);
    for (std::size_t i = 0; i < rows; ++i) row_ids_.push_back(std::to_string(i));
  } else if (row_ids_.size() != rows) {
    throw Error(ErrorCode::InvalidArgument, "row id count does not match row count");
  }
}

EmbeddingMatrix EmbeddingMatrix::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  std::vector<Vector> copy;
  for (const auto& r : rows) copy.emplace_back(r);
  return from_rows(copy);
}

EmbeddingMatrix EmbeddingMatrix::from_rows(const std::vector<Vector>& rows) {
  if (rows.empty()) throw Error(ErrorCode::EmptySet, "matrix needs at least one row");
  EmbeddingMatrix m(rows.front().size());
  for (const auto& r : rows) m.append(r);
  return m;
}

void EmbeddingMatrix::append(VectorView row, std::string id) {
  if (row.size() != dim_) throw Error(ErrorCode::DimensionMismatch, "row dimension differs from matrix");
  values_.insert(values_.end(), row.begin(), row.end());
  row_ids_.push_back(id.empty() ? std::to_string(rows_) : std::move(id));
  ++rows_;
}

std::string ComponentId::str() const {
  std::string s = layer + "/" + std::to_string(index);
  if (sign == Sign::negative) s += "-";
  return s;
}

double dot(VectorView x, VectorView y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "dims " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += double(x[i]) * double(y[i]);
  return acc;
}

double l2_norm(VectorView x) {
  double acc = 0.0;
  for (float v : x) acc += double(v) * double(v);
  return std::sqrt(acc);
}

void require_valid_vector(VectorView x, std::string_view what) {
  if (x.empty()) throw Error(ErrorCode::InvalidArgument, std::string(what) + " has dimension 0");
  for (float v : x) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, std::string(what) + " has non-finite entry");
  }
  if (l2_norm(x) < 1e-12) throw Error(ErrorCode::ZeroNormVector, std::string(what) + " has zero norm");
}

double cosine_similarity(VectorView x, VectorView y) {
  const double xy = dot(x, y);
  const double nx = l2_norm(x);
  const double ny = l2_norm(y);
  if (!std::isfinite(xy) || !std::isfinite(nx) || !std::isfinite(ny)) {
    throw Error(ErrorCode::NonFiniteValue, "cosine of a non-finite vector");
  }
  if (nx == 0.0 || ny == 0.0) throw Error(ErrorCode::ZeroNormVector, "cosine of a zero vector is undefined");
  return xy / (nx * ny);
}

Vector mean_embedding(MatrixView examples) {
  if (examples.rows == 0) throw Error(ErrorCode::EmptySet, "mean of an empty set");
  std::vector<double> acc(examples.dim, 0.0);
  for (std::size_t r = 0; r < examples.rows; ++r) {
    const auto row = examples.row(r);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += row[j];
  }
  Vector out(acc.size());
  const double n = double(examples.rows);
  for (std::size_t j = 0; j < acc.size(); ++j) out[j] = float(acc[j] / n);
  return out;
}

double alignment(VectorView theta, VectorView probe, std::optional<VectorView> null) {
  const double s = cosine_similarity(probe, theta);
  if (!null) return s;
  return s - cosine_similarity(*null, theta);
}

}  // namespace lens
