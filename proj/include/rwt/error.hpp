#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rwt {

enum class Errc {
  MissingFile,
  EmptySequence,
  ParseError,
  BadMagic,
  UnsupportedVersion,
  DimensionMismatch,
  TruncatedFile,
  IoError,
  NonUnitQuaternion,
  OutOfBounds,
  EmptyImage,
  TooFewCandidates,
  InvalidDepth,
  DepthOutOfRange,
  DegenerateConfiguration,
  NotEnoughInliers,
  NumericalFailure,
  DegenerateInput,
  NotEnoughPoints,
  InsufficientData,
  VersionMismatch,
  Corrupt,
  NoOverlap,
  TooFewPoses,
  ConfigError,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::MissingFile: return "MissingFile";
    case Errc::EmptySequence: return "EmptySequence";
    case Errc::ParseError: return "ParseError";
    case Errc::BadMagic: return "BadMagic";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::IoError: return "IoError";
    case Errc::NonUnitQuaternion: return "NonUnitQuaternion";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::EmptyImage: return "EmptyImage";
    case Errc::TooFewCandidates: return "TooFewCandidates";
    case Errc::InvalidDepth: return "InvalidDepth";
    case Errc::DepthOutOfRange: return "DepthOutOfRange";
    case Errc::DegenerateConfiguration: return "DegenerateConfiguration";
    case Errc::NotEnoughInliers: return "NotEnoughInliers";
    case Errc::NumericalFailure: return "NumericalFailure";
    case Errc::DegenerateInput: return "DegenerateInput";
    case Errc::NotEnoughPoints: return "NotEnoughPoints";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::VersionMismatch: return "VersionMismatch";
    case Errc::Corrupt: return "Corrupt";
    case Errc::NoOverlap: return "NoOverlap";
    case Errc::TooFewPoses: return "TooFewPoses";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Library-wide exception. Every failure carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace rwt
