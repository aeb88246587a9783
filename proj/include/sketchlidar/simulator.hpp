#pragma once

// Synthetic photon acquisition under the surface-plus-background mixture.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "sketchlidar/model.hpp"
#include "sketchlidar/sketch.hpp"

namespace sketchlidar {

/// Ground-truth scene. Each pixel lists its surfaces with intensities relative
/// to the pixel's total signal (they sum to one when the list is non-empty);
/// an empty list marks a pixel with no surface in view.
struct SceneReference {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t T = 0;
  std::vector<std::vector<Surface>> pixels;
  /// Optional per-pixel flux multiplier applied to the mean photon count.
  std::vector<double> flux;

  std::size_t pixel_count() const noexcept { return rows * cols; }
  std::size_t index(std::size_t row, std::size_t col) const noexcept { return row * cols + col; }
  std::size_t max_surfaces() const noexcept;
  std::size_t total_surfaces() const noexcept;
  double flux_at(std::size_t pixel) const noexcept { return flux.empty() ? 1.0 : flux[pixel]; }

  static SceneReference plane(std::size_t rows, std::size_t cols, std::size_t T, double depth);
  /// Left half at `left`, right half at `right`.
  static SceneReference step_edge(std::size_t rows, std::size_t cols, std::size_t T, double left,
                                  double right);
  /// Two surfaces in every pixel: a front layer and a back layer, with the
  /// back layer stepping to `back_inset` inside the central third of columns.
  static SceneReference two_layer(std::size_t rows, std::size_t cols, std::size_t T, double front,
                                  double back, double back_inset, double front_share);
};

/// Throws RangeError when the scene breaks its invariants.
void validate(const SceneReference& scene);

struct AcquisitionConfig {
  double photons = 1.0;  ///< mean detected photons per pixel
  double sbr = 1.0;      ///< signal-to-background ratio, may be +infinity
  InstrumentResponse irf = InstrumentResponse::delta();
  std::uint64_t seed = 0;
};

/// Background probability implied by a signal-to-background ratio.
double background_weight(double sbr) noexcept;

/// Absolute mixture parameters of a scene pixel at the given SBR.
PixelParams expected_params(std::span<const Surface> truth, double sbr);

/// Samples offsets from the discrete response law h(u)/H.
class IrfSampler {
 public:
  explicit IrfSampler(const InstrumentResponse& irf);

  /// Stamp for a surface at `depth` on a period-T axis. Non-integer depths are
  /// dithered between the two neighbouring integer shifts so that the mean
  /// stamp position is exact.
  std::uint32_t sample(double depth, std::size_t T, std::mt19937_64& rng) const;

 private:
  double center_;
  mutable std::discrete_distribution<std::size_t> offsets_;
};

/// Per-pixel generator seed: a deterministic mix of the frame seed and the
/// row-major pixel index.
std::uint64_t pixel_seed(std::uint64_t seed, std::uint64_t pixel) noexcept;

/// Draws one pixel's stamps. The photon count is Poisson(mean_photons); each
/// photon is background with probability 1/(1+sbr), otherwise it belongs to a
/// surface chosen by relative intensity. Pixels without surfaces only receive
/// their background share, mean_photons/(1+sbr).
std::vector<std::uint32_t> sample_pixel_photons(std::span<const Surface> truth,
                                                double mean_photons, double sbr,
                                                const IrfSampler& irf, std::size_t T,
                                                std::mt19937_64& rng);

/// Simulates a whole frame; bit-for-bit reproducible for a given seed.
PhotonFrame simulate_frame(const SceneReference& scene, const AcquisitionConfig& cfg);

/// Counts of stamps in `bins` coarse bins of width `bin_width`. Throws
/// BadBinning unless bins * bin_width == T.
std::vector<std::uint64_t> histogram(std::span<const std::uint32_t> stamps, std::size_t T,
                                     std::size_t bins, std::size_t bin_width);

}  // namespace sketchlidar
