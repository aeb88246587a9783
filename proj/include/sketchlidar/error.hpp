#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sketchlidar {

enum class Errc {
  InvalidArgument,
  EmptySketch,
  OutOfRange,
  SchemeMismatch,
  EmptyHistogram,
  BadBinning,
  DimensionMismatch,
  IllConditioned,
  NoSurfaceFound,
  ZeroMagnitude,
  EmptyFrame,
  NoGroundTruth,
  BadMagic,
  UnsupportedVersion,
  TruncatedFile,
  StampOutOfRange,
  ParseError,
  RangeError,
  ManifestError,
  IoError,
};

std::string_view to_string(Errc code) noexcept;

/// Library-wide exception carrying a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace sketchlidar
