#pragma once

// Cross-correlation baseline and detection metrics against a ground-truth
// scene.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "sketchlidar/estimate.hpp"
#include "sketchlidar/model.hpp"
#include "sketchlidar/simulator.hpp"
#include "sketchlidar/sketch.hpp"

namespace sketchlidar {

struct XcorrResult {
  std::size_t depth = 0;
  double score = 0.0;
};

/// Argmax over integer shifts t of the circular correlation
/// sum_x y(x) h(x - t + c), with c the response center, so that t refers to
/// the response peak like every other depth in the library. Scores within a
/// relative 1e-12 of the maximum count as ties and resolve to the smallest
/// shift. Throws EmptyHistogram when y has no counts.
XcorrResult xcorr_depth(std::span<const std::uint64_t> y, const InstrumentResponse& irf);

/// One surface per lit pixel: the correlation peak, with the signal fraction
/// estimated from the photons inside the response window above the uniform
/// background expectation.
PointCloudEstimate xcorr_frame(const PhotonFrame& frame, const InstrumentResponse& irf);

struct MatchSet {
  /// (estimate index, ground-truth index) pairs within tau of each other.
  std::vector<std::pair<std::size_t, std::size_t>> matches;
  std::vector<std::size_t> false_detections;
  std::vector<std::size_t> misses;
};

/// Greedy one-to-one matching of a pixel: candidate pairs within tau are taken
/// in order of increasing circular depth distance (ties by estimate, then
/// ground-truth index). Throws InvalidArgument unless tau > 0.
MatchSet detection_match(std::span<const Surface> est, std::span<const Surface> gt, double tau,
                         double period);

struct PixelMatchRow {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t gt_surfaces = 0;
  std::size_t est_surfaces = 0;
  std::size_t true_detections = 0;
  std::size_t false_detections = 0;
  std::size_t misses = 0;
};

struct EvalReport {
  double tau = 0.0;
  double intensity_scale = 1.0;
  std::size_t gt_surfaces = 0;
  std::size_t est_surfaces = 0;
  std::size_t true_detections = 0;
  std::size_t false_detections = 0;
  std::size_t misses = 0;
  /// true_detections / gt_surfaces.
  double true_rate = 0.0;
  /// false_detections / est_surfaces (0 when nothing was estimated).
  double false_rate = 0.0;
  /// Mean |depth error| over true detections; NaN when there are none.
  double dae = 0.0;
  /// Mean |intensity error| over true detections divided by the mean scaled
  /// ground-truth intensity of those detections; NaN when there are none.
  double iae = 0.0;
  /// Median over ground-truth surfaces of the circular distance to the nearest
  /// estimated surface of the same pixel (infinity when the pixel is empty).
  double median_depth_error = 0.0;
  std::vector<PixelMatchRow> pixels;
};

/// Scores an estimate against the scene. Ground-truth intensities are relative
/// to the pixel signal, so they are multiplied by `intensity_scale` (for
/// example sbr / (1 + sbr)) before comparing with estimated mixture weights.
/// Throws DimensionMismatch and NoGroundTruth.
EvalReport evaluate(const PointCloudEstimate& est, const SceneReference& gt, double tau,
                    double intensity_scale = 1.0);

/// "key value" lines preceded by '#' convention notes.
void write_report_text(std::ostream& os, const EvalReport& report);
/// Comma-separated header plus one summary row.
void write_report_csv(std::ostream& os, const EvalReport& report);
/// Comma-separated per-pixel match table.
void write_match_table_csv(std::ostream& os, const EvalReport& report);

}  // namespace sketchlidar
