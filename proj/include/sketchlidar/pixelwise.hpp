#pragma once

// Pixelwise sketched estimation: minimize n * ||z - Psi_theta||^2 for each
// pixel independently.

#include <cstddef>
#include <span>
#include <vector>

#include "sketchlidar/estimate.hpp"
#include "sketchlidar/model.hpp"
#include "sketchlidar/sketch.hpp"

namespace sketchlidar {

struct FitOptions {
  std::size_t max_surfaces = 1;
  /// Backprojection grid spacing in bins; 0 selects T / (4 m). Must not
  /// exceed T / (2 m).
  double grid_step = 0.0;
  /// Minimum depth separation between surfaces; 0 selects the model default.
  double min_separation = 0.0;
  std::size_t max_iterations = 50;
  /// Stop once an accepted step lowers the loss by less than this fraction.
  /// Zero runs exactly max_iterations per start, so the cost of a fit does
  /// not depend on the data.
  double tolerance = 1e-10;
  double prune_threshold = 0.02;
  /// Largest normalized inner product allowed between two surface atoms.
  double coherence_limit = 0.999;
};

struct PixelFit {
  PixelParams params;
  double loss = 0.0;
  std::size_t iterations = 0;
};

/// Resolved grid step and separation for a model.
double grid_step(const FitOptions& opts, const SketchModel& model);
double min_separation(const FitOptions& opts, const SketchModel& model);

/// Uniform depth grid over [0, T) with the given spacing.
std::vector<double> depth_grid(const SketchModel& model, double step);

/// Matched filter g(t) = Re sum_l z_l conj(response_l) exp(-i omega_l t).
std::vector<double> backproject(SketchView z, const SketchModel& model,
                                std::span<const double> grid);

/// Up to K positive local maxima of the backprojection, greedily chosen by
/// height (ties to the lower depth) at least min_separation apart, sorted.
std::vector<double> init_depths(SketchView z, const SketchModel& model, std::size_t K,
                                const FitOptions& opts);

/// Depth estimates from the shift-invariance of the deconvolved sketch
/// (matrix pencil). Needs m >= 2K; returns sorted depths, possibly fewer than K
/// when roots collide.
std::vector<double> spectral_depths(SketchView z, const SketchModel& model, std::size_t K,
                                    double min_separation);

/// Intensities minimizing ||z - sum_k alpha_k atom(t_k)||^2 subject to
/// alpha >= 0 and sum(alpha) <= 1. Throws IllConditioned when two atoms are
/// nearly collinear.
std::vector<double> solve_alpha(SketchView z, std::span<const double> depths,
                                const SketchModel& model, double coherence_limit = 0.999);

/// Full pixel fit: multi-start initialization, variable-projection
/// Levenberg-Marquardt on depths, pruning of weak surfaces. Throws EmptySketch
/// and NoSurfaceFound.
PixelFit fit_pixel(SketchView z, const SketchModel& model, const FitOptions& opts);

/// Refines the given starting depths; the loss never increases across
/// accepted iterations. `loss_trace`, when given, receives the loss after
/// every accepted iteration (starting with the initial loss).
PixelFit refine_pixel(SketchView z, const SketchModel& model, std::vector<double> depths,
                      const FitOptions& opts, std::vector<double>* loss_trace = nullptr);

/// Single-surface depth from the phase of the first sketch entry.
double closed_form_depth_k1(SketchView z, const SketchModel& model);

/// Fits every pixel independently. Pixels without photons or without a
/// surviving surface are left empty.
PointCloudEstimate fit_frame(const SketchFrame& frame, const SketchModel& model,
                             const FitOptions& opts);

}  // namespace sketchlidar
