#include "sketchlidar/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sketchlidar/error.hpp"

namespace sketchlidar {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

SceneReference empty_scene(std::size_t rows, std::size_t cols, std::size_t T) {
  SceneReference s;
  s.rows = rows;
  s.cols = cols;
  s.T = T;
  s.pixels.resize(rows * cols);
  return s;
}

}  // namespace

std::size_t SceneReference::max_surfaces() const noexcept {
  std::size_t k = 0;
  for (const auto& p : pixels) k = std::max(k, p.size());
  return k;
}

std::size_t SceneReference::total_surfaces() const noexcept {
  std::size_t k = 0;
  for (const auto& p : pixels) k += p.size();
  return k;
}

SceneReference SceneReference::plane(std::size_t rows, std::size_t cols, std::size_t T,
                                     double depth) {
  auto s = empty_scene(rows, cols, T);
  for (auto& p : s.pixels) p = {{depth, 1.0}};
  return s;
}

SceneReference SceneReference::step_edge(std::size_t rows, std::size_t cols, std::size_t T,
                                         double left, double right) {
  auto s = empty_scene(rows, cols, T);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      s.pixels[s.index(r, c)] = {{c < cols / 2 ? left : right, 1.0}};
    }
  }
  return s;
}

SceneReference SceneReference::two_layer(std::size_t rows, std::size_t cols, std::size_t T,
                                         double front, double back, double back_inset,
                                         double front_share) {
  auto s = empty_scene(rows, cols, T);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const bool inset = c >= cols / 3 && c < 2 * cols / 3;
      std::vector<Surface> surf{{front, front_share}, {inset ? back_inset : back, 1.0 - front_share}};
      std::sort(surf.begin(), surf.end(),
                [](const Surface& a, const Surface& b) { return a.depth < b.depth; });
      s.pixels[s.index(r, c)] = std::move(surf);
    }
  }
  return s;
}

void validate(const SceneReference& scene) {
  if (scene.rows == 0 || scene.cols == 0) throw Error(Errc::RangeError, "scene dimensions must be >= 1");
  if (scene.T < 2) throw Error(Errc::RangeError, "scene T must be >= 2");
  if (scene.pixels.size() != scene.pixel_count()) {
    throw Error(Errc::RangeError, "scene pixel list does not match its dimensions");
  }
  if (!scene.flux.empty() && scene.flux.size() != scene.pixel_count()) {
    throw Error(Errc::RangeError, "flux map does not match scene dimensions");
  }
  const double period = static_cast<double>(scene.T);
  for (std::size_t p = 0; p < scene.pixel_count(); ++p) {
    for (const auto& s : scene.pixels[p]) {
      if (!(s.depth >= 0.0 && s.depth < period)) {
        throw Error(Errc::RangeError, "depth outside [0, T) at pixel " + std::to_string(p));
      }
      if (!(s.intensity >= 0.0) || !std::isfinite(s.intensity)) {
        throw Error(Errc::RangeError, "negative intensity at pixel " + std::to_string(p));
      }
    }
    if (!scene.flux.empty() && !(scene.flux[p] >= 0.0 && std::isfinite(scene.flux[p]))) {
      throw Error(Errc::RangeError, "invalid flux at pixel " + std::to_string(p));
    }
  }
}

double background_weight(double sbr) noexcept {
  if (std::isinf(sbr)) return 0.0;
  return 1.0 / (1.0 + sbr);
}

PixelParams expected_params(std::span<const Surface> truth, double sbr) {
  double total = 0.0;
  for (const auto& s : truth) total += s.intensity;
  std::vector<Surface> surfaces;
  const double signal = 1.0 - background_weight(sbr);
  for (const auto& s : truth) {
    surfaces.push_back({s.depth, total > 0.0 ? signal * s.intensity / total : 0.0});
  }
  if (surfaces.empty()) return PixelParams{};
  return PixelParams::from_surfaces(std::move(surfaces));
}

IrfSampler::IrfSampler(const InstrumentResponse& irf)
    : center_(irf.center()), offsets_(irf.samples().begin(), irf.samples().end()) {}

std::uint32_t IrfSampler::sample(double depth, std::size_t T, std::mt19937_64& rng) const {
  const double base = depth - center_;
  const double lower = std::floor(base);
  const double frac = base - lower;
  auto shift = static_cast<std::int64_t>(lower);
  if (frac > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < frac) ++shift;
  const auto period = static_cast<std::int64_t>(T);
  std::int64_t x = (shift + static_cast<std::int64_t>(offsets_(rng))) % period;
  if (x < 0) x += period;
  return static_cast<std::uint32_t>(x);
}

std::uint64_t pixel_seed(std::uint64_t seed, std::uint64_t pixel) noexcept {
  return splitmix64(seed ^ splitmix64(pixel));
}

std::vector<std::uint32_t> sample_pixel_photons(std::span<const Surface> truth,
                                                double mean_photons, double sbr,
                                                const IrfSampler& irf, std::size_t T,
                                                std::mt19937_64& rng) {
  const double alpha0 = background_weight(sbr);
  double total = 0.0;
  for (const auto& s : truth) total += s.intensity;
  const bool has_signal = !truth.empty() && total > 0.0;

  const double mean = has_signal ? mean_photons : mean_photons * alpha0;
  std::vector<std::uint32_t> stamps;
  if (!(mean > 0.0)) return stamps;
  const auto n = std::poisson_distribution<std::uint64_t>(mean)(rng);
  stamps.reserve(n);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> uniform_stamp(0, static_cast<std::uint32_t>(T - 1));
  for (std::uint64_t i = 0; i < n; ++i) {
    if (!has_signal || unit(rng) < alpha0) {
      stamps.push_back(uniform_stamp(rng));
      continue;
    }
    double pick = unit(rng) * total;
    std::size_t k = 0;
    while (k + 1 < truth.size() && pick >= truth[k].intensity) {
      pick -= truth[k].intensity;
      ++k;
    }
    stamps.push_back(irf.sample(truth[k].depth, T, rng));
  }
  return stamps;
}

PhotonFrame simulate_frame(const SceneReference& scene, const AcquisitionConfig& cfg) {
  validate(scene);
  if (cfg.irf.length() > scene.T) {
    throw Error(Errc::DimensionMismatch, "impulse response longer than the scene time axis");
  }
  if (!(cfg.photons > 0.0)) throw Error(Errc::InvalidArgument, "mean photon count must be > 0");
  if (!(cfg.sbr > 0.0)) throw Error(Errc::InvalidArgument, "SBR must be > 0");

  const IrfSampler sampler(cfg.irf);
  PhotonFrame frame(scene.rows, scene.cols, scene.T);
  for (std::size_t p = 0; p < scene.pixel_count(); ++p) {
    std::mt19937_64 rng(pixel_seed(cfg.seed, p));
    const auto stamps = sample_pixel_photons(scene.pixels[p], cfg.photons * scene.flux_at(p),
                                             cfg.sbr, sampler, scene.T, rng);
    frame.push_pixel(stamps);
  }
  return frame;
}

std::vector<std::uint64_t> histogram(std::span<const std::uint32_t> stamps, std::size_t T,
                                     std::size_t bins, std::size_t bin_width) {
  if (bins == 0 || bin_width == 0 || bins * bin_width != T) {
    throw Error(Errc::BadBinning, "bins * bin width must equal T");
  }
  std::vector<std::uint64_t> counts(bins, 0);
  for (auto x : stamps) {
    if (x >= T) throw Error(Errc::OutOfRange, "stamp outside the time axis");
    ++counts[x / bin_width];
  }
  return counts;
}

}  // namespace sketchlidar
