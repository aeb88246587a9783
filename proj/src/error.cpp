#include "sketchlidar/error.hpp"

namespace sketchlidar {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::EmptySketch: return "EmptySketch";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::SchemeMismatch: return "SchemeMismatch";
    case Errc::EmptyHistogram: return "EmptyHistogram";
    case Errc::BadBinning: return "BadBinning";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::IllConditioned: return "IllConditioned";
    case Errc::NoSurfaceFound: return "NoSurfaceFound";
    case Errc::ZeroMagnitude: return "ZeroMagnitude";
    case Errc::EmptyFrame: return "EmptyFrame";
    case Errc::NoGroundTruth: return "NoGroundTruth";
    case Errc::BadMagic: return "BadMagic";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::TruncatedFile: return "TruncatedFile";
    case Errc::StampOutOfRange: return "StampOutOfRange";
    case Errc::ParseError: return "ParseError";
    case Errc::RangeError: return "RangeError";
    case Errc::ManifestError: return "ManifestError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace sketchlidar
