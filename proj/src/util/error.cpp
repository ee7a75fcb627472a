#include "debris/error.hpp"

namespace debris {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::NoImagesFound: return "NoImagesFound";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::TooFewClasses: return "TooFewClasses";
    case ErrorKind::ClassTooSmall: return "ClassTooSmall";
    case ErrorKind::ManifestParseError: return "ManifestParseError";
    case ErrorKind::ImageDecodeError: return "ImageDecodeError";
    case ErrorKind::AugmentationOnEvalSplit: return "AugmentationOnEvalSplit";
    case ErrorKind::TensorCacheError: return "TensorCacheError";
    case ErrorKind::BackboneLoadError: return "BackboneLoadError";
    case ErrorKind::BackboneShapeError: return "BackboneShapeError";
    case ErrorKind::InferenceError: return "InferenceError";
    case ErrorKind::NonFiniteEmbedding: return "NonFiniteEmbedding";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::DimensionError: return "DimensionError";
    case ErrorKind::SplitLeakage: return "SplitLeakage";
    case ErrorKind::FeatureCacheError: return "FeatureCacheError";
    case ErrorKind::DegenerateBinaryProblem: return "DegenerateBinaryProblem";
    case ErrorKind::CodingMatrixError: return "CodingMatrixError";
    case ErrorKind::EmptyModel: return "EmptyModel";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::SingularCovariance: return "SingularCovariance";
    case ErrorKind::StandardizationMismatch: return "StandardizationMismatch";
    case ErrorKind::ModelFormatError: return "ModelFormatError";
    case ErrorKind::ClassTooSmallForCv: return "ClassTooSmallForCv";
    case ErrorKind::ReportParseError: return "ReportParseError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message),
      kind_(kind),
      detail_(message) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace debris
