#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lens {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  ZeroNormVector,
  NonFiniteValue,
  EmptySet,
  SingletonSet,
  MissingBlob,
  SizeMismatch,
  CorruptManifest,
  UnknownComponent,
  UnknownLayer,
  IoFailure,
  EmptyLayerFilter,
  DegenerateData,
  KTooLarge,
  MissingRelevance,
  UnknownTarget,
  UnknownProbeSet,
  NoValidConcepts,
  NoSpuriousConcepts,
  NullEmbeddingMissing,
  DegenerateResponse,
  MissingEdges,
  UpstreamUnavailable,
  DimMismatchFromUpstream,
  BindFailure,
  LoadFailure,
  UnknownDatabase,
  NotFound,
};

std::string_view to_string(ErrorCode code);

// Every failure in the engine surfaces as lens::Error carrying a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace lens
