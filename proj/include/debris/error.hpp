#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace debris {

enum class ErrorKind {
  // dataset
  NoImagesFound,
  EmptyClass,
  TooFewClasses,
  ClassTooSmall,
  ManifestParseError,
  // preprocess
  ImageDecodeError,
  AugmentationOnEvalSplit,
  TensorCacheError,
  // embedding
  BackboneLoadError,
  BackboneShapeError,
  InferenceError,
  NonFiniteEmbedding,
  InsufficientData,
  DimensionError,
  SplitLeakage,
  FeatureCacheError,
  // classifiers
  DegenerateBinaryProblem,
  CodingMatrixError,
  EmptyModel,
  ConfigError,
  SingularCovariance,
  StandardizationMismatch,
  ModelFormatError,
  // evaluation
  ClassTooSmallForCv,
  ReportParseError,
  IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every library failure is raised as this type; `kind()` identifies the
/// condition and `what()` starts with the kind name.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  /// Message without the leading kind name.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace debris
