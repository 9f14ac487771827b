#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace keyvote3d {

enum class ErrorCode {
  InvalidArgument,
  InsufficientPoints,
  DegenerateGeometry,
  ShapeMismatch,
  DegenerateLines,
  AllHypothesesDegenerate,
  DegenerateCorrespondences,
  InsufficientWeight,
  AllZeroConfidence,
  NoCorrespondences,
  DegenerateScene,
  ParseError,
  UnsupportedFormat,
  DimensionMismatch,
  MagicMismatch,
  TruncatedFile,
  NormViolation,
  NotARotation,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InsufficientPoints: return "InsufficientPoints";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateLines: return "DegenerateLines";
    case ErrorCode::AllHypothesesDegenerate: return "AllHypothesesDegenerate";
    case ErrorCode::DegenerateCorrespondences: return "DegenerateCorrespondences";
    case ErrorCode::InsufficientWeight: return "InsufficientWeight";
    case ErrorCode::AllZeroConfidence: return "AllZeroConfidence";
    case ErrorCode::NoCorrespondences: return "NoCorrespondences";
    case ErrorCode::DegenerateScene: return "DegenerateScene";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MagicMismatch: return "MagicMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::NormViolation: return "NormViolation";
    case ErrorCode::NotARotation: return "NotARotation";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Single exception type for the library. The code identifies the failure
/// class; keypoint() is set when the failure is tied to one keypoint.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  Error(ErrorCode code, const std::string& message, int keypoint)
      : std::runtime_error(std::string(to_string(code)) + " (keypoint " +
                           std::to_string(keypoint) + "): " + message),
        code_(code),
        detail_(message),
        keypoint_(keypoint) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<int> keypoint() const noexcept { return keypoint_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
  std::optional<int> keypoint_;
};

}  // namespace keyvote3d
