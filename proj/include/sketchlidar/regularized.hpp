#pragma once

// Spatially regularized reconstruction from sketches. Per-pixel data-fidelity
// steps on n * ||z - Psi_theta||^2 alternate with a frame-level point-cloud
// denoiser that plays the role of the regularizer (plug-and-play).

#include <cstddef>
#include <memory>
#include <string_view>
#include <vector>

#include "sketchlidar/estimate.hpp"
#include "sketchlidar/model.hpp"
#include "sketchlidar/pixelwise.hpp"
#include "sketchlidar/sketch.hpp"

namespace sketchlidar {

enum class DenoiserKind { None, WeightedMedian, Bilateral };

DenoiserKind parse_denoiser(std::string_view name);
std::string_view to_string(DenoiserKind kind) noexcept;

struct Srt3dOptions {
  std::size_t outer_iterations = 10;
  std::size_t data_steps = 3;
  /// Proximal step size of the data step. The per-pixel move is roughly a
  /// fraction n*mu/(1 + n*mu) of a Gauss-Newton step, so well-lit pixels
  /// follow their data and dim pixels follow the denoiser.
  double step_size = 0.01;
  DenoiserKind denoiser = DenoiserKind::WeightedMedian;
  std::size_t radius = 2;
  /// Window radius of the merged-sketch initialization; only used while the
  /// regularizer is active.
  std::size_t init_radius = 3;
  /// Iterations per start of the initial fit, run without early stopping
  /// while the regularizer is active.
  std::size_t init_iterations = 15;
  /// Depth distance (bins) under which surfaces of neighbouring pixels are
  /// treated as the same layer; 0 selects 3x the response width (>= 3 bins).
  double edge_threshold = 0.0;
  /// Blend factor in [0, 1] towards the window mean of log-intensity.
  double intensity_smoothing = 0.5;
  double prune_threshold = 0.02;
  bool birth = true;
  /// Birth needs n * ||z - Psi||^2 / m above this (zero-photon pixels always
  /// qualify).
  double residual_threshold = 2.0;
  /// Pixelwise options for the initial fit; max_surfaces caps every pixel.
  FitOptions fit;

  bool regularized() const noexcept { return denoiser != DenoiserKind::None && radius > 0; }
};

/// Throws InvalidArgument for out-of-range options.
void validate(const Srt3dOptions& opts);

double edge_threshold(const Srt3dOptions& opts, const SketchModel& model);

struct DenoiserParams {
  std::size_t radius = 2;
  double edge_threshold = 30.0;
  double intensity_smoothing = 0.5;
};

/// Frame-level regularizer. Implementations read a frozen input estimate and
/// return a new one.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual PointCloudEstimate denoise(const PointCloudEstimate& est) const = 0;
};

/// For each surface, every neighbour in the window contributes its surface
/// nearest in depth; the depth becomes the (intensity x count)-weighted median
/// of those. Log-intensity is blended with its mean over neighbours within the
/// edge threshold.
class WeightedMedianDenoiser final : public Denoiser {
 public:
  explicit WeightedMedianDenoiser(DenoiserParams params) : params_(params) {}
  PointCloudEstimate denoise(const PointCloudEstimate& est) const override;

 private:
  DenoiserParams params_;
};

/// Same layer matching as the median denoiser, with a Gaussian spatial and
/// depth-range weighted mean in place of the median.
class BilateralDenoiser final : public Denoiser {
 public:
  explicit BilateralDenoiser(DenoiserParams params) : params_(params) {}
  PointCloudEstimate denoise(const PointCloudEstimate& est) const override;

 private:
  DenoiserParams params_;
};

/// Identity; used when the regularizer is disabled.
class NullDenoiser final : public Denoiser {
 public:
  PointCloudEstimate denoise(const PointCloudEstimate& est) const override { return est; }
};

std::unique_ptr<Denoiser> make_denoiser(const Srt3dOptions& opts, const SketchModel& model);

/// Sum over pixels of n * ||z - Psi||^2.
double data_objective(const PointCloudEstimate& est, const SketchFrame& frame,
                      const SketchModel& model);

/// Gradient of data_objective, concatenating [dt.., dalpha..] per pixel in
/// row-major order over pixels that carry surfaces.
std::vector<double> data_objective_gradient(const PointCloudEstimate& est,
                                            const SketchFrame& frame, const SketchModel& model);

/// `steps` proximal Gauss-Newton updates of every pixel's depths and
/// intensities against its own sketch. An update is only accepted when it
/// does not increase the pixel's loss; after a rejection the next update uses
/// a quarter of the step size. Pixels without photons are untouched.
PointCloudEstimate data_step(const PointCloudEstimate& est, const SketchFrame& frame,
                             const SketchModel& model, double step_size, std::size_t steps,
                             double min_separation);

PointCloudEstimate denoise_step(const PointCloudEstimate& est, const Srt3dOptions& opts,
                                const SketchModel& model);

/// Removes weak surfaces and merges surfaces closer than the minimum
/// separation. With birth enabled and the regularizer active, a pixel below
/// max_surfaces whose data is poorly explained (or that has no photons)
/// receives the surface that most of its populated neighbours carry and it
/// lacks, at the median depth and intensity of those neighbours.
PointCloudEstimate prune_and_birth(const PointCloudEstimate& est, const SketchFrame& frame,
                                   const SketchModel& model, const Srt3dOptions& opts);

/// Count-weighted merge of each pixel's sketch with its (2r+1)^2 window.
SketchFrame window_merge(const SketchFrame& frame, std::size_t radius);

/// Full reconstruction. Throws EmptyFrame when no pixel has photons.
PointCloudEstimate reconstruct(const SketchFrame& frame, const SketchModel& model,
                               const Srt3dOptions& opts);

}  // namespace sketchlidar
