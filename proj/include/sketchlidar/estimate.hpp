#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sketchlidar/model.hpp"

namespace sketchlidar {

/// Reconstructed scene: a depth-sorted surface list per pixel plus the number
/// of photons that pixel's sketch was built from.
struct PointCloudEstimate {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t T = 0;
  std::vector<std::vector<Surface>> pixels;
  std::vector<std::uint64_t> counts;

  PointCloudEstimate() = default;
  PointCloudEstimate(std::size_t rows, std::size_t cols, std::size_t T)
      : rows(rows), cols(cols), T(T), pixels(rows * cols), counts(rows * cols, 0) {}

  std::size_t pixel_count() const noexcept { return rows * cols; }
  std::size_t index(std::size_t row, std::size_t col) const noexcept { return row * cols + col; }
  std::size_t total_surfaces() const noexcept {
    std::size_t k = 0;
    for (const auto& p : pixels) k += p.size();
    return k;
  }

  bool operator==(const PointCloudEstimate&) const = default;
};

/// Throws RangeError unless every pixel has sorted depths in [0, T),
/// non-negative intensities and total intensity at most one.
void validate(const PointCloudEstimate& est);

}  // namespace sketchlidar
