#pragma once

#include <compare>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lens/error.hpp"

namespace lens {

using Vector = std::vector<float>;
using VectorView = std::span<const float>;

// Non-owning row-major view; used for both owned matrices and mapped blobs.
struct MatrixView {
  std::span<const float> values;
  std::size_t rows = 0;
  std::size_t dim = 0;

  VectorView row(std::size_t i) const { return values.subspan(i * dim, dim); }
};

// Row-major n x d matrix of embeddings with one opaque id per row.
class EmbeddingMatrix {
 public:
  explicit EmbeddingMatrix(std::size_t dim);
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> values,
                  std::vector<std::string> row_ids = {});

  static EmbeddingMatrix from_rows(std::initializer_list<std::initializer_list<float>> rows);
  static EmbeddingMatrix from_rows(const std::vector<Vector>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return rows_ == 0; }

  VectorView row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  const std::string& row_id(std::size_t i) const { return row_ids_[i]; }
  std::span<const float> values() const noexcept { return values_; }
  MatrixView view() const noexcept { return {values_, rows_, dim_}; }
  operator MatrixView() const noexcept { return view(); }

  // Appends a row; an empty id defaults to the row position.
  void append(VectorView row, std::string id = {});

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> values_;
  std::vector<std::string> row_ids_;
};

enum class Sign { positive, negative };

struct ComponentId {
  std::string model_id;
  std::string layer;
  std::size_t index = 0;
  Sign sign = Sign::positive;

  // "<layer>/<index>" with a "-" suffix for negative sign.
  std::string str() const;

  friend bool operator==(const ComponentId&, const ComponentId&) = default;
};

double dot(VectorView x, VectorView y);
double l2_norm(VectorView x);

// Throws NonFiniteValue / ZeroNormVector for vectors that may not enter the engine.
void require_valid_vector(VectorView x, std::string_view what);

double cosine_similarity(VectorView x, VectorView y);

// Arithmetic mean of the rows (theta_k), accumulated in ascending row order.
Vector mean_embedding(MatrixView examples);

// s(probe, theta) - s(null, theta); plain cosine when null is absent.
double alignment(VectorView theta, VectorView probe, std::optional<VectorView> null = std::nullopt);

}  // namespace lens
