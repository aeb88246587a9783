#include "sketchlidar/regularized.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "sketchlidar/error.hpp"

namespace sketchlidar {

namespace {

constexpr Complex kI{0.0, 1.0};

void require_matching(const PointCloudEstimate& est, const SketchFrame& frame,
                      const SketchModel& model) {
  if (est.rows != frame.rows() || est.cols != frame.cols()) {
    throw Error(Errc::DimensionMismatch, "estimate and sketch frame differ in size");
  }
  if (!(frame.scheme() == model.scheme())) {
    throw Error(Errc::SchemeMismatch, "frame scheme differs from model scheme");
  }
}

double weight_of(const Surface& s, std::uint64_t count) {
  return std::max(s.intensity, 1e-6) * static_cast<double>(std::max<std::uint64_t>(count, 1));
}

// Signed circular offset b - a in (-period/2, period/2].
double signed_offset(double a, double b, double period) {
  double d = std::fmod(b - a, period);
  if (d > 0.5 * period) d -= period;
  if (d <= -0.5 * period) d += period;
  return d;
}

const Surface* nearest_surface(const std::vector<Surface>& surfaces, double depth, double period) {
  const Surface* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& s : surfaces) {
    const double d = circular_distance(s.depth, depth, period);
    if (d < best_d) {
      best_d = d;
      best = &s;
    }
  }
  return best;
}

struct Sample {
  double value;
  double weight;
};

double weighted_median(std::vector<Sample>& samples) {
  std::sort(samples.begin(), samples.end(),
            [](const Sample& a, const Sample& b) { return a.value < b.value; });
  double total = 0.0;
  for (const auto& s : samples) total += s.weight;
  double acc = 0.0;
  for (const auto& s : samples) {
    acc += s.weight;
    if (acc >= 0.5 * total) return s.value;
  }
  return samples.back().value;
}

void sort_surfaces(std::vector<Surface>& surfaces) {
  std::sort(surfaces.begin(), surfaces.end(),
            [](const Surface& a, const Surface& b) { return a.depth < b.depth; });
}

// Euclidean projection onto {a >= 0, sum(a) <= 1}.
void project_capped_simplex(std::vector<double>& a) {
  double total = 0.0;
  for (auto& v : a) {
    v = std::max(v, 0.0);
    total += v;
  }
  if (total <= 1.0) return;
  std::vector<double> sorted(a);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double shift = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    cumulative += sorted[i];
    const double candidate = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (sorted[i] - candidate > 0.0) shift = candidate;
  }
  for (auto& v : a) v = std::max(v - shift, 0.0);
}

double pixel_loss(SketchView z, const std::vector<Surface>& surfaces, const SketchModel& model) {
  auto params = PixelParams::from_surfaces(surfaces);
  params.background = 1.0 - params.signal_mass();
  return sketch_loss(z, params, model);
}

bool well_separated(const std::vector<Surface>& surfaces, double period, double sep) {
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    for (std::size_t j = i + 1; j < surfaces.size(); ++j) {
      if (circular_distance(surfaces[i].depth, surfaces[j].depth, period) < sep) return false;
    }
  }
  return true;
}

// One proximal Gauss-Newton update of a pixel, evaluated at a single trial
// point so that every update costs the same. Returns false when the trial
// would increase the loss (the pixel is then left unchanged).
bool proximal_update(SketchView z, std::vector<Surface>& surfaces, const SketchModel& model,
                     double step_size, double min_sep) {
  const std::size_t K = surfaces.size();
  const std::size_t m = model.m();
  const double n = static_cast<double>(z.count);
  const double period = model.period();
  const auto bg = model.background();

  double signal = 0.0;
  for (const auto& s : surfaces) signal += s.intensity;
  std::vector<Complex> atoms(K * m);
  std::vector<Complex> residual(m);
  double current = 0.0;
  for (std::size_t l = 0; l < m; ++l) residual[l] = z.values[l] - (1.0 - signal) * bg[l];
  for (std::size_t k = 0; k < K; ++k) {
    model.atom(surfaces[k].depth, std::span<Complex>(atoms.data() + k * m, m));
    for (std::size_t l = 0; l < m; ++l) residual[l] -= surfaces[k].intensity * atoms[k * m + l];
  }
  for (const auto& r : residual) current += std::norm(r);
  current *= n;

  // Residual Jacobian columns: depths first, then intensities.
  const std::size_t P = 2 * K;
  std::vector<Complex> jac(P * m);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t l = 0; l < m; ++l) {
      jac[k * m + l] = -surfaces[k].intensity * kI * model.frequency(l) * atoms[k * m + l];
      jac[(K + k) * m + l] = -(atoms[k * m + l] - bg[l]);
    }
  }
  Eigen::MatrixXd A(static_cast<Eigen::Index>(P), static_cast<Eigen::Index>(P));
  Eigen::VectorXd g(static_cast<Eigen::Index>(P));
  for (std::size_t i = 0; i < P; ++i) {
    Complex gi{0.0, 0.0};
    for (std::size_t l = 0; l < m; ++l) gi += std::conj(jac[i * m + l]) * residual[l];
    g[static_cast<Eigen::Index>(i)] = gi.real();
    for (std::size_t j = 0; j < P; ++j) {
      Complex a{0.0, 0.0};
      for (std::size_t l = 0; l < m; ++l) a += std::conj(jac[i * m + l]) * jac[j * m + l];
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a.real();
    }
  }
  // minimize n |r + J d|^2 + (1/mu) d^T diag(J^T J) d
  const double floor_scale = 1e-12 * std::max(A.diagonal().maxCoeff(), 1e-300);
  Eigen::MatrixXd system = n * A;
  for (Eigen::Index i = 0; i < system.rows(); ++i) {
    system(i, i) += (std::max(A(i, i), 0.0) + floor_scale) / step_size;
  }
  Eigen::VectorXd step = system.ldlt().solve(-n * g);
  if (!step.allFinite()) return false;

  const double max_move = period / (4.0 * static_cast<double>(m));
  double largest = 0.0;
  for (std::size_t k = 0; k < K; ++k) largest = std::max(largest, std::abs(step[static_cast<Eigen::Index>(k)]));
  if (largest > max_move) step *= max_move / largest;

  std::vector<Surface> trial = surfaces;
  std::vector<double> alpha(K);
  for (std::size_t k = 0; k < K; ++k) {
    trial[k].depth = wrap_depth(surfaces[k].depth + step[static_cast<Eigen::Index>(k)], period);
    alpha[k] = surfaces[k].intensity + step[static_cast<Eigen::Index>(K + k)];
  }
  project_capped_simplex(alpha);
  for (std::size_t k = 0; k < K; ++k) trial[k].intensity = alpha[k];
  sort_surfaces(trial);
  if (!well_separated(trial, period, min_sep)) return false;
  if (pixel_loss(z, trial, model) > current) return false;
  surfaces = std::move(trial);
  return true;
}

struct WindowSample {
  double offset;  // signed depth offset to the centre surface
  double intensity;
  std::uint64_t count;
  double weight;
  double spatial_sq;  // squared pixel distance to the centre
};

// Neighbour surfaces nearest to `centre`, over the window around (r, c).
std::vector<WindowSample> gather(const PointCloudEstimate& est, std::size_t r, std::size_t c,
                                 std::size_t radius, double centre) {
  const double period = static_cast<double>(est.T);
  std::vector<WindowSample> out;
  const std::size_t r0 = r >= radius ? r - radius : 0;
  const std::size_t c0 = c >= radius ? c - radius : 0;
  const std::size_t r1 = std::min(est.rows - 1, r + radius);
  const std::size_t c1 = std::min(est.cols - 1, c + radius);
  for (std::size_t rr = r0; rr <= r1; ++rr) {
    for (std::size_t cc = c0; cc <= c1; ++cc) {
      const std::size_t q = est.index(rr, cc);
      const Surface* s = nearest_surface(est.pixels[q], centre, period);
      if (!s) continue;
      const double dr = static_cast<double>(rr) - static_cast<double>(r);
      const double dc = static_cast<double>(cc) - static_cast<double>(c);
      out.push_back({signed_offset(centre, s->depth, period), s->intensity, est.counts[q],
                     weight_of(*s, est.counts[q]), dr * dr + dc * dc});
    }
  }
  return out;
}

double smoothed_intensity(double own, const std::vector<WindowSample>& window, double edge,
                          double blend) {
  if (!(own > 0.0) || blend <= 0.0) return own;
  double num = 0.0;
  double den = 0.0;
  for (const auto& w : window) {
    if (std::abs(w.offset) > edge || !(w.intensity > 0.0)) continue;
    const double rel = static_cast<double>(std::max<std::uint64_t>(w.count, 1));
    num += rel * std::log(w.intensity);
    den += rel;
  }
  if (den <= 0.0) return own;
  return std::exp((1.0 - blend) * std::log(own) + blend * num / den);
}

template <typename DepthRule>
PointCloudEstimate layerwise_denoise(const PointCloudEstimate& est, const DenoiserParams& params,
                                     DepthRule depth_rule) {
  PointCloudEstimate out = est;
  if (params.radius == 0) return out;
  const double period = static_cast<double>(est.T);
  for (std::size_t r = 0; r < est.rows; ++r) {
    for (std::size_t c = 0; c < est.cols; ++c) {
      const std::size_t p = est.index(r, c);
      auto& surfaces = out.pixels[p];
      for (std::size_t k = 0; k < surfaces.size(); ++k) {
        const Surface& own = est.pixels[p][k];
        const auto window = gather(est, r, c, params.radius, own.depth);
        surfaces[k].depth = wrap_depth(own.depth + depth_rule(window), period);
        surfaces[k].intensity =
            smoothed_intensity(own.intensity, window, params.edge_threshold, params.intensity_smoothing);
      }
      sort_surfaces(surfaces);
    }
  }
  return out;
}

}  // namespace

DenoiserKind parse_denoiser(std::string_view name) {
  if (name == "median") return DenoiserKind::WeightedMedian;
  if (name == "bilateral") return DenoiserKind::Bilateral;
  if (name == "none") return DenoiserKind::None;
  throw Error(Errc::InvalidArgument, "unknown denoiser '" + std::string(name) + "'");
}

std::string_view to_string(DenoiserKind kind) noexcept {
  switch (kind) {
    case DenoiserKind::None: return "none";
    case DenoiserKind::WeightedMedian: return "median";
    case DenoiserKind::Bilateral: return "bilateral";
  }
  return "none";
}

void validate(const Srt3dOptions& opts) {
  if (!(opts.step_size >= 0.0)) throw Error(Errc::InvalidArgument, "step size must be >= 0");
  if (!(opts.intensity_smoothing >= 0.0 && opts.intensity_smoothing <= 1.0)) {
    throw Error(Errc::InvalidArgument, "intensity smoothing must lie in [0, 1]");
  }
  if (!(opts.prune_threshold >= 0.0)) throw Error(Errc::InvalidArgument, "prune threshold must be >= 0");
  if (!(opts.edge_threshold >= 0.0)) throw Error(Errc::InvalidArgument, "edge threshold must be >= 0");
  if (!(opts.residual_threshold >= 0.0)) {
    throw Error(Errc::InvalidArgument, "residual threshold must be >= 0");
  }
  if (opts.fit.max_surfaces == 0) throw Error(Errc::InvalidArgument, "max_surfaces must be >= 1");
}

double edge_threshold(const Srt3dOptions& opts, const SketchModel& model) {
  if (opts.edge_threshold > 0.0) return opts.edge_threshold;
  return std::max(3.0, 3.0 * model.irf().width());
}

PointCloudEstimate WeightedMedianDenoiser::denoise(const PointCloudEstimate& est) const {
  return layerwise_denoise(est, params_, [](const std::vector<WindowSample>& window) {
    std::vector<Sample> samples;
    samples.reserve(window.size());
    for (const auto& w : window) samples.push_back({w.offset, w.weight});
    return weighted_median(samples);
  });
}

PointCloudEstimate BilateralDenoiser::denoise(const PointCloudEstimate& est) const {
  const double spatial = std::max(0.5 * static_cast<double>(params_.radius), 0.5);
  const double range = std::max(0.5 * params_.edge_threshold, 1e-6);
  return layerwise_denoise(est, params_, [=](const std::vector<WindowSample>& window) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& w : window) {
      const double k = w.weight * std::exp(-0.5 * w.spatial_sq / (spatial * spatial)) *
                       std::exp(-0.5 * w.offset * w.offset / (range * range));
      num += k * w.offset;
      den += k;
    }
    return den > 0.0 ? num / den : 0.0;
  });
}

std::unique_ptr<Denoiser> make_denoiser(const Srt3dOptions& opts, const SketchModel& model) {
  const DenoiserParams params{opts.radius, edge_threshold(opts, model), opts.intensity_smoothing};
  switch (opts.regularized() ? opts.denoiser : DenoiserKind::None) {
    case DenoiserKind::WeightedMedian: return std::make_unique<WeightedMedianDenoiser>(params);
    case DenoiserKind::Bilateral: return std::make_unique<BilateralDenoiser>(params);
    case DenoiserKind::None: break;
  }
  return std::make_unique<NullDenoiser>();
}

double data_objective(const PointCloudEstimate& est, const SketchFrame& frame,
                      const SketchModel& model) {
  require_matching(est, frame, model);
  double total = 0.0;
  for (std::size_t p = 0; p < est.pixel_count(); ++p) {
    const auto z = frame.view(p);
    if (z.empty()) continue;
    total += pixel_loss(z, est.pixels[p], model);
  }
  return total;
}

std::vector<double> data_objective_gradient(const PointCloudEstimate& est,
                                            const SketchFrame& frame, const SketchModel& model) {
  require_matching(est, frame, model);
  std::vector<double> grad;
  for (std::size_t p = 0; p < est.pixel_count(); ++p) {
    const auto& surfaces = est.pixels[p];
    if (surfaces.empty()) continue;
    const auto z = frame.view(p);
    if (z.empty()) {
      grad.insert(grad.end(), 2 * surfaces.size(), 0.0);
      continue;
    }
    auto params = PixelParams::from_surfaces(surfaces);
    params.background = 1.0 - params.signal_mass();
    const auto g = sketch_loss_gradient(z, params, model);
    grad.insert(grad.end(), g.begin(), g.end());
  }
  return grad;
}

PointCloudEstimate data_step(const PointCloudEstimate& est, const SketchFrame& frame,
                             const SketchModel& model, double step_size, std::size_t steps,
                             double min_separation) {
  require_matching(est, frame, model);
  PointCloudEstimate out = est;
  if (!(step_size > 0.0) || steps == 0) return out;
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    const auto z = frame.view(p);
    out.counts[p] = z.count;
    if (z.empty() || out.pixels[p].empty()) continue;
    // A rejected update retries with a stronger proximal weight.
    double mu = step_size;
    for (std::size_t s = 0; s < steps; ++s) {
      if (!proximal_update(z, out.pixels[p], model, mu, min_separation)) mu *= 0.25;
    }
  }
  return out;
}

PointCloudEstimate denoise_step(const PointCloudEstimate& est, const Srt3dOptions& opts,
                                const SketchModel& model) {
  return make_denoiser(opts, model)->denoise(est);
}

PointCloudEstimate prune_and_birth(const PointCloudEstimate& est, const SketchFrame& frame,
                                   const SketchModel& model, const Srt3dOptions& opts) {
  require_matching(est, frame, model);
  const double period = model.period();
  const double sep = min_separation(opts.fit, model);
  const double edge = edge_threshold(opts, model);

  PointCloudEstimate out = est;
  for (auto& surfaces : out.pixels) {
    std::erase_if(surfaces, [&](const Surface& s) {
      return !(s.intensity >= opts.prune_threshold) || s.intensity <= 0.0;
    });
    sort_surfaces(surfaces);
    // Merge surfaces that drifted together.
    for (std::size_t k = 0; k + 1 < surfaces.size();) {
      auto& a = surfaces[k];
      const auto& b = surfaces[k + 1];
      if (circular_distance(a.depth, b.depth, period) < sep) {
        const double total = a.intensity + b.intensity;
        a.depth = wrap_depth(a.depth + signed_offset(a.depth, b.depth, period) * b.intensity / total, period);
        a.intensity = std::min(total, 1.0);
        surfaces.erase(surfaces.begin() + static_cast<std::ptrdiff_t>(k + 1));
      } else {
        ++k;
      }
    }
    sort_surfaces(surfaces);
  }
  if (!opts.birth || !opts.regularized()) return out;

  const PointCloudEstimate snapshot = out;
  const std::size_t radius = std::max<std::size_t>(opts.radius, 1);
  const std::size_t K_max = opts.fit.max_surfaces;
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (std::size_t c = 0; c < out.cols; ++c) {
      const std::size_t p = out.index(r, c);
      const auto& own = snapshot.pixels[p];
      if (own.size() >= K_max) continue;
      const auto z = frame.view(p);
      if (!z.empty()) {
        const double residual = pixel_loss(z, own, model) / static_cast<double>(model.m());
        if (residual <= opts.residual_threshold) continue;
      }

      // Neighbour surfaces this pixel lacks.
      std::vector<const Surface*> lacking;
      std::size_t populated = 0;
      const std::size_t r0 = r >= radius ? r - radius : 0;
      const std::size_t c0 = c >= radius ? c - radius : 0;
      for (std::size_t rr = r0; rr <= std::min(out.rows - 1, r + radius); ++rr) {
        for (std::size_t cc = c0; cc <= std::min(out.cols - 1, c + radius); ++cc) {
          const std::size_t q = out.index(rr, cc);
          if (q == p || snapshot.pixels[q].empty()) continue;
          ++populated;
          for (const auto& s : snapshot.pixels[q]) {
            const bool present = std::any_of(own.begin(), own.end(), [&](const Surface& o) {
              return circular_distance(o.depth, s.depth, period) <= edge;
            });
            if (!present) lacking.push_back(&s);
          }
        }
      }
      if (lacking.empty()) continue;

      // Consensus: the lacking surface with the most neighbours agreeing on it.
      std::size_t best_support = 0;
      const Surface* best = nullptr;
      for (const auto* cand : lacking) {
        std::size_t support = 0;
        for (const auto* other : lacking) {
          if (circular_distance(cand->depth, other->depth, period) <= edge) ++support;
        }
        if (support > best_support || (support == best_support && best && cand->depth < best->depth)) {
          best_support = support;
          best = cand;
        }
      }
      if (2 * best_support < populated) continue;

      std::vector<Sample> depths;
      std::vector<Sample> intensities;
      for (const auto* other : lacking) {
        if (circular_distance(best->depth, other->depth, period) > edge) continue;
        depths.push_back({signed_offset(best->depth, other->depth, period), 1.0});
        intensities.push_back({other->intensity, 1.0});
      }
      Surface born{wrap_depth(best->depth + weighted_median(depths), period),
                   weighted_median(intensities)};
      auto& target = out.pixels[p];
      const bool crowded = std::any_of(target.begin(), target.end(), [&](const Surface& s) {
        return circular_distance(s.depth, born.depth, period) < sep;
      });
      if (crowded) continue;
      double signal = born.intensity;
      for (const auto& s : target) signal += s.intensity;
      if (signal > 1.0) born.intensity = std::max(0.0, born.intensity - (signal - 1.0));
      if (born.intensity <= 0.0) continue;
      target.push_back(born);
      sort_surfaces(target);
    }
  }
  return out;
}

SketchFrame window_merge(const SketchFrame& frame, std::size_t radius) {
  SketchFrame out(frame.rows(), frame.cols(), frame.scheme());
  const std::size_t m = frame.m();
  std::vector<Complex> acc(m);
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    for (std::size_t c = 0; c < frame.cols(); ++c) {
      std::fill(acc.begin(), acc.end(), Complex{0.0, 0.0});
      std::uint64_t total = 0;
      const std::size_t r0 = r >= radius ? r - radius : 0;
      const std::size_t c0 = c >= radius ? c - radius : 0;
      for (std::size_t rr = r0; rr <= std::min(frame.rows() - 1, r + radius); ++rr) {
        for (std::size_t cc = c0; cc <= std::min(frame.cols() - 1, c + radius); ++cc) {
          const auto z = frame.view(frame.index(rr, cc));
          if (z.empty()) continue;
          const double n = static_cast<double>(z.count);
          for (std::size_t l = 0; l < m; ++l) acc[l] += n * z.values[l];
          total += z.count;
        }
      }
      const std::size_t p = frame.index(r, c);
      if (total == 0) continue;
      auto dst = out.mutable_values(p);
      for (std::size_t l = 0; l < m; ++l) dst[l] = acc[l] / static_cast<double>(total);
      out.set_count(p, total);
    }
  }
  return out;
}

PointCloudEstimate reconstruct(const SketchFrame& frame, const SketchModel& model,
                               const Srt3dOptions& opts) {
  validate(opts);
  if (!(frame.scheme() == model.scheme())) {
    throw Error(Errc::SchemeMismatch, "frame scheme differs from model scheme");
  }
  if (frame.total_photons() == 0) throw Error(Errc::EmptyFrame, "no pixel has photons");

  PointCloudEstimate est;
  if (opts.regularized()) {
    // Fixed iteration budget: inference cost must not depend on the data.
    FitOptions init = opts.fit;
    init.tolerance = 0.0;
    init.max_iterations = opts.init_iterations;
    est = fit_frame(opts.init_radius > 0 ? window_merge(frame, opts.init_radius) : frame, model, init);
    for (std::size_t p = 0; p < frame.pixel_count(); ++p) est.counts[p] = frame.count(p);
  } else {
    est = fit_frame(frame, model, opts.fit);
  }

  const double sep = min_separation(opts.fit, model);
  const auto denoiser = make_denoiser(opts, model);
  for (std::size_t it = 0; it < opts.outer_iterations; ++it) {
    est = data_step(est, frame, model, opts.step_size, opts.data_steps, sep);
    est = denoiser->denoise(est);
    est = prune_and_birth(est, frame, model, opts);
  }
  return est;
}

}  // namespace sketchlidar
