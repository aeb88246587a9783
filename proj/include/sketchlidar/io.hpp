#pragma once

// File formats. Binary formats are little-endian and start with an 8-byte
// magic and a u16 version:
//
//   photon frame   "SLPHOTON" ver rows:u32 cols:u32 T:u32
//                  then per pixel (row-major) count:u32 and count x stamp:u32
//   sketch frame   "SLSKETCH" ver rows:u32 cols:u32 T:u32 m:u16
//                  then per pixel count:u64 and m x (re:f64, im:f64)
//   estimate       "SLESTIM\0" ver rows:u32 cols:u32 T:u32
//                  then per pixel count:u64 K:u8 and K x (depth:f64, intensity:f64)
//
// Scenes are a text manifest naming one comma-separated depth grid and one
// intensity grid per surface layer (absent surfaces are "nan"), plus an
// optional flux grid. File names in the manifest are relative to it.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "sketchlidar/estimate.hpp"
#include "sketchlidar/model.hpp"
#include "sketchlidar/simulator.hpp"
#include "sketchlidar/sketch.hpp"

namespace sketchlidar {

inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kPhotonHeaderBytes = 22;
inline constexpr std::size_t kSketchHeaderBytes = 24;
inline constexpr std::size_t kEstimateHeaderBytes = 22;

/// Size of a sketch-frame file in bytes.
constexpr std::uint64_t sketch_file_size(std::uint64_t rows, std::uint64_t cols, std::uint64_t m) {
  return kSketchHeaderBytes + rows * cols * (8 + 16 * m);
}

void write_photon_frame(const std::filesystem::path& path, const PhotonFrame& frame);
/// Throws BadMagic, UnsupportedVersion, TruncatedFile, StampOutOfRange, IoError.
PhotonFrame read_photon_frame(const std::filesystem::path& path);

/// Pixel-at-a-time photon frame reader; holds one pixel's stamps at a time.
class PhotonFrameReader {
 public:
  explicit PhotonFrameReader(const std::filesystem::path& path);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t T() const noexcept { return T_; }
  /// Reads the next pixel into `stamps`; false after the last pixel.
  bool next(std::vector<std::uint32_t>& stamps);
  /// Throws unless every pixel was read and the file has no trailing bytes.
  void finish();

 private:
  std::ifstream in_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t T_ = 0;
  std::size_t next_pixel_ = 0;
};

void write_sketch_frame(const std::filesystem::path& path, const SketchFrame& frame);
/// Also checks the file size against sketch_file_size.
SketchFrame read_sketch_frame(const std::filesystem::path& path);

void write_estimate(const std::filesystem::path& path, const PointCloudEstimate& est);
PointCloudEstimate read_estimate(const std::filesystem::path& path);

/// Writes the manifest at `manifest` and its grids next to it.
void write_scene(const std::filesystem::path& manifest, const SceneReference& scene);
/// Throws ManifestError, ParseError (with row/col), RangeError.
SceneReference read_scene(const std::filesystem::path& manifest);

/// ASCII PLY with one vertex per surface: x = column, y = row,
/// z = depth * scale, plus the intensity.
void write_ply(const std::filesystem::path& path, const PointCloudEstimate& est, double scale);

/// "delta", "gauss:<sigma>" or "file:<path>" (whitespace or comma separated
/// samples). Throws InvalidArgument, IoError, ParseError.
InstrumentResponse parse_irf(std::string_view spec);

}  // namespace sketchlidar
