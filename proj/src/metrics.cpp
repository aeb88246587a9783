#include "sketchlidar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "sketchlidar/error.hpp"

namespace sketchlidar {

namespace {

// Adds the correlation contributions of every nonzero bin.
std::vector<double> correlation(std::span<const std::uint64_t> y, const InstrumentResponse& irf) {
  const std::size_t T = y.size();
  const auto h = irf.samples();
  const auto c = static_cast<std::int64_t>(std::llround(irf.center()));
  const auto period = static_cast<std::int64_t>(T);
  std::vector<double> score(T, 0.0);
  for (std::size_t x = 0; x < T; ++x) {
    if (y[x] == 0) continue;
    const double weight = static_cast<double>(y[x]);
    for (std::size_t u = 0; u < h.size(); ++u) {
      std::int64_t t = (static_cast<std::int64_t>(x) - static_cast<std::int64_t>(u) + c) % period;
      if (t < 0) t += period;
      score[static_cast<std::size_t>(t)] += weight * h[u];
    }
  }
  return score;
}

double median_of(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

XcorrResult xcorr_depth(std::span<const std::uint64_t> y, const InstrumentResponse& irf) {
  std::uint64_t total = 0;
  for (auto v : y) total += v;
  if (total == 0) throw Error(Errc::EmptyHistogram, "histogram has no counts");
  const auto score = correlation(y, irf);
  const double best = *std::max_element(score.begin(), score.end());
  const double tol = 1e-12 * std::abs(best);
  for (std::size_t t = 0; t < score.size(); ++t) {
    if (score[t] >= best - tol) return {t, best};
  }
  return {0, best};
}

PointCloudEstimate xcorr_frame(const PhotonFrame& frame, const InstrumentResponse& irf) {
  const std::size_t T = frame.T();
  PointCloudEstimate est(frame.rows(), frame.cols(), T);
  const double L = static_cast<double>(std::min(irf.length(), T));
  const auto c = static_cast<std::int64_t>(std::llround(irf.center()));
  std::vector<std::uint64_t> y(T);
  for (std::size_t p = 0; p < frame.pixel_count(); ++p) {
    const auto stamps = frame.stamps(p);
    est.counts[p] = stamps.size();
    if (stamps.empty()) continue;
    std::fill(y.begin(), y.end(), 0);
    for (auto x : stamps) ++y[x];
    const auto peak = xcorr_depth(y, irf);

    // Photons inside the response window that starts c bins before the peak.
    std::uint64_t inside = 0;
    for (auto x : stamps) {
      const auto offset = static_cast<std::int64_t>(x) - static_cast<std::int64_t>(peak.depth) + c;
      const auto u = ((offset % static_cast<std::int64_t>(T)) + static_cast<std::int64_t>(T)) %
                     static_cast<std::int64_t>(T);
      if (static_cast<double>(u) < L) ++inside;
    }
    const double n = static_cast<double>(stamps.size());
    const double share = L / static_cast<double>(T);
    double alpha = share < 1.0 ? (static_cast<double>(inside) / n - share) / (1.0 - share) : 1.0;
    alpha = std::clamp(alpha, 0.0, 1.0);
    est.pixels[p].push_back({static_cast<double>(peak.depth), alpha});
  }
  return est;
}

MatchSet detection_match(std::span<const Surface> est, std::span<const Surface> gt, double tau,
                         double period) {
  if (!(tau > 0.0)) throw Error(Errc::InvalidArgument, "tau must be positive");
  struct Candidate {
    double distance;
    std::size_t e;
    std::size_t g;
  };
  std::vector<Candidate> candidates;
  for (std::size_t e = 0; e < est.size(); ++e) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double d = circular_distance(est[e].depth, gt[g].depth, period);
      if (d <= tau) candidates.push_back({d, e, g});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.e != b.e) return a.e < b.e;
    return a.g < b.g;
  });
  std::vector<bool> est_used(est.size(), false);
  std::vector<bool> gt_used(gt.size(), false);
  MatchSet out;
  for (const auto& cand : candidates) {
    if (est_used[cand.e] || gt_used[cand.g]) continue;
    est_used[cand.e] = true;
    gt_used[cand.g] = true;
    out.matches.emplace_back(cand.e, cand.g);
  }
  for (std::size_t e = 0; e < est.size(); ++e) {
    if (!est_used[e]) out.false_detections.push_back(e);
  }
  for (std::size_t g = 0; g < gt.size(); ++g) {
    if (!gt_used[g]) out.misses.push_back(g);
  }
  return out;
}

EvalReport evaluate(const PointCloudEstimate& est, const SceneReference& gt, double tau,
                    double intensity_scale) {
  if (est.rows != gt.rows || est.cols != gt.cols || est.T != gt.T) {
    throw Error(Errc::DimensionMismatch, "estimate and scene differ in size or period");
  }
  if (gt.total_surfaces() == 0) throw Error(Errc::NoGroundTruth, "scene has no surfaces");

  const double period = static_cast<double>(gt.T);
  EvalReport r;
  r.tau = tau;
  r.intensity_scale = intensity_scale;
  double depth_error = 0.0;
  double intensity_error = 0.0;
  double intensity_ref = 0.0;
  std::vector<double> nearest;
  nearest.reserve(gt.total_surfaces());

  for (std::size_t row = 0; row < gt.rows; ++row) {
    for (std::size_t col = 0; col < gt.cols; ++col) {
      const std::size_t p = gt.index(row, col);
      const auto& e = est.pixels[p];
      const auto& g = gt.pixels[p];
      const auto match = detection_match(e, g, tau, period);
      for (const auto& [ei, gi] : match.matches) {
        depth_error += circular_distance(e[ei].depth, g[gi].depth, period);
        const double ref = intensity_scale * g[gi].intensity;
        intensity_error += std::abs(e[ei].intensity - ref);
        intensity_ref += ref;
      }
      for (const auto& s : g) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : e) best = std::min(best, circular_distance(q.depth, s.depth, period));
        nearest.push_back(best);
      }
      r.gt_surfaces += g.size();
      r.est_surfaces += e.size();
      r.true_detections += match.matches.size();
      r.false_detections += match.false_detections.size();
      r.misses += match.misses.size();
      r.pixels.push_back({row, col, g.size(), e.size(), match.matches.size(),
                          match.false_detections.size(), match.misses.size()});
    }
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto matched = static_cast<double>(r.true_detections);
  r.true_rate = matched / static_cast<double>(r.gt_surfaces);
  r.false_rate = r.est_surfaces > 0
                     ? static_cast<double>(r.false_detections) / static_cast<double>(r.est_surfaces)
                     : 0.0;
  r.dae = r.true_detections > 0 ? depth_error / matched : nan;
  r.iae = r.true_detections > 0 && intensity_ref > 0.0 ? intensity_error / intensity_ref : nan;
  r.median_depth_error = median_of(std::move(nearest));
  return r;
}

void write_report_text(std::ostream& os, const EvalReport& r) {
  os << "# true_rate = true detections / ground-truth surfaces\n"
     << "# false_rate = unmatched estimates / estimated surfaces\n"
     << "# matching = greedy nearest circular depth, one-to-one, pairs within tau\n"
     << "# dae = mean |depth error| in bins over true detections\n"
     << "# iae = mean |intensity error| / mean(intensity_scale * gt intensity), over true detections\n"
     << "# median_depth_error = median over gt surfaces of distance to nearest estimate in the pixel\n";
  os.precision(17);
  os << "tau " << r.tau << '\n'
     << "intensity_scale " << r.intensity_scale << '\n'
     << "gt_surfaces " << r.gt_surfaces << '\n'
     << "est_surfaces " << r.est_surfaces << '\n'
     << "true_detections " << r.true_detections << '\n'
     << "false_detections " << r.false_detections << '\n'
     << "misses " << r.misses << '\n'
     << "true_rate " << r.true_rate << '\n'
     << "false_rate " << r.false_rate << '\n'
     << "dae " << r.dae << '\n'
     << "iae " << r.iae << '\n'
     << "median_depth_error " << r.median_depth_error << '\n';
}

void write_report_csv(std::ostream& os, const EvalReport& r) {
  os.precision(17);
  os << "tau,intensity_scale,gt_surfaces,est_surfaces,true_detections,false_detections,misses,"
        "true_rate,false_rate,dae,iae,median_depth_error\n";
  os << r.tau << ',' << r.intensity_scale << ',' << r.gt_surfaces << ',' << r.est_surfaces << ','
     << r.true_detections << ',' << r.false_detections << ',' << r.misses << ',' << r.true_rate
     << ',' << r.false_rate << ',' << r.dae << ',' << r.iae << ',' << r.median_depth_error << '\n';
}

void write_match_table_csv(std::ostream& os, const EvalReport& r) {
  os << "row,col,gt_surfaces,est_surfaces,true_detections,false_detections,misses\n";
  for (const auto& p : r.pixels) {
    os << p.row << ',' << p.col << ',' << p.gt_surfaces << ',' << p.est_surfaces << ','
       << p.true_detections << ',' << p.false_detections << ',' << p.misses << '\n';
  }
}

}  // namespace sketchlidar
