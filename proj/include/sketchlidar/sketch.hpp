#pragma once

// Streaming accumulation of pixel sketches and the frame containers that hold
// raw photon stamps or their sketches.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sketchlidar/model.hpp"

namespace sketchlidar {

/// Per-pixel photon time stamps on the fine grid, stored contiguously.
class PhotonFrame {
 public:
  PhotonFrame(std::size_t rows, std::size_t cols, std::size_t T);
  PhotonFrame(std::size_t rows, std::size_t cols, std::size_t T,
              const std::vector<std::vector<std::uint32_t>>& pixels);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t T() const noexcept { return T_; }
  std::size_t pixel_count() const noexcept { return rows_ * cols_; }
  std::size_t index(std::size_t row, std::size_t col) const noexcept { return row * cols_ + col; }

  /// Appends the next pixel in row-major order. Throws StampOutOfRange.
  void push_pixel(std::span<const std::uint32_t> stamps);
  /// Number of pixels pushed so far.
  std::size_t filled() const noexcept { return offsets_.size() - 1; }
  bool complete() const noexcept { return filled() == pixel_count(); }

  std::span<const std::uint32_t> stamps(std::size_t pixel) const noexcept {
    return {stamps_.data() + offsets_[pixel], offsets_[pixel + 1] - offsets_[pixel]};
  }
  std::uint64_t total_photons() const noexcept { return stamps_.size(); }

  bool operator==(const PhotonFrame&) const = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::size_t T_;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> stamps_;
};

/// One sketch per pixel, stored as a flat N x m block plus N counters. No
/// per-photon state is kept.
class SketchFrame {
 public:
  SketchFrame(std::size_t rows, std::size_t cols, FrequencyScheme scheme);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t pixel_count() const noexcept { return rows_ * cols_; }
  std::size_t index(std::size_t row, std::size_t col) const noexcept { return row * cols_ + col; }
  const FrequencyScheme& scheme() const noexcept { return scheme_; }
  std::size_t m() const noexcept { return scheme_.m(); }

  SketchView view(std::size_t pixel) const noexcept {
    return {std::span<const Complex>(values_.data() + pixel * m(), m()), counts_[pixel]};
  }
  Sketch sketch(std::size_t pixel) const;
  std::span<Complex> mutable_values(std::size_t pixel) noexcept {
    return {values_.data() + pixel * m(), m()};
  }
  std::uint64_t count(std::size_t pixel) const noexcept { return counts_[pixel]; }
  void set_count(std::size_t pixel, std::uint64_t n) noexcept { counts_[pixel] = n; }
  void set(std::size_t pixel, SketchView s);

  std::uint64_t total_photons() const noexcept;
  /// Bytes of sketch payload held by the frame.
  std::size_t payload_bytes() const noexcept {
    return values_.size() * sizeof(Complex) + counts_.size() * sizeof(std::uint64_t);
  }

  bool operator==(const SketchFrame&) const = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  FrequencyScheme scheme_;
  std::vector<Complex> values_;
  std::vector<std::uint64_t> counts_;
};

/// exp(i 2 pi l x / T) for stamp x, using exact integer phase reduction.
Complex stamp_phasor(std::uint64_t x, std::size_t l, std::size_t T) noexcept;

/// Running-mean update of a sketch with one photon stamp. Throws OutOfRange.
void update_sketch(Sketch& sketch, std::int64_t stamp, const FrequencyScheme& scheme);

/// Batch empirical characteristic function of a stamp list.
Sketch sketch_from_list(std::span<const std::uint32_t> stamps, const FrequencyScheme& scheme);

/// Count-weighted mean of two sketches. Throws SchemeMismatch on size mismatch.
Sketch merge_sketches(SketchView a, SketchView b);

/// Sketch of a coarse histogram of `counts.size()` bins of width `bin_width`.
/// Each bin is placed at the mean of the fine stamps it covers, so a width-1
/// histogram reproduces the stamp list exactly.
Sketch sketch_from_histogram(std::span<const std::uint64_t> counts, std::size_t bin_width,
                             const FrequencyScheme& scheme);

/// Streaming accumulator with a precomputed phasor table (T entries).
class SketchAccumulator {
 public:
  explicit SketchAccumulator(FrequencyScheme scheme);

  const FrequencyScheme& scheme() const noexcept { return scheme_; }
  void add(Sketch& sketch, std::uint32_t stamp) const;
  void add(std::span<Complex> values, std::uint64_t& count, std::uint32_t stamp) const;

 private:
  FrequencyScheme scheme_;
  std::vector<Complex> table_;
};

/// Sketches every pixel of a photon frame.
SketchFrame sketch_frame(const PhotonFrame& photons, const FrequencyScheme& scheme);

/// Pixelwise merge of two frames over the same grid and scheme.
SketchFrame merge_frames(const SketchFrame& a, const SketchFrame& b);

}  // namespace sketchlidar
