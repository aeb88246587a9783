#include "sketchlidar/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sketchlidar/error.hpp"

namespace sketchlidar {

namespace {

constexpr Complex kI{0.0, 1.0};

void require_nonempty(SketchView z) {
  if (z.empty()) throw Error(Errc::EmptySketch, "sketch has no photons");
}

void require_size(SketchView z, const SketchModel& model) {
  if (z.size() != model.m()) {
    throw Error(Errc::SchemeMismatch, "sketch has " + std::to_string(z.size()) +
                                          " entries, model expects " + std::to_string(model.m()));
  }
}

}  // namespace

InstrumentResponse::InstrumentResponse(std::vector<double> samples, double center)
    : samples_(std::move(samples)), center_(center) {
  if (samples_.empty()) throw Error(Errc::InvalidArgument, "impulse response is empty");
  for (double v : samples_) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(Errc::InvalidArgument, "impulse response samples must be finite and >= 0");
    }
  }
  total_ = std::accumulate(samples_.begin(), samples_.end(), 0.0);
  if (!(total_ > 0.0)) throw Error(Errc::InvalidArgument, "impulse response sums to zero");
  if (!std::isfinite(center_)) throw Error(Errc::InvalidArgument, "impulse response center");

  double mean = 0.0;
  for (std::size_t u = 0; u < samples_.size(); ++u) mean += samples_[u] * static_cast<double>(u);
  mean /= total_;
  double var = 0.0;
  for (std::size_t u = 0; u < samples_.size(); ++u) {
    const double d = static_cast<double>(u) - mean;
    var += samples_[u] * d * d;
  }
  width_ = std::sqrt(var / total_);
}

InstrumentResponse InstrumentResponse::delta() { return InstrumentResponse({1.0}, 0.0); }

InstrumentResponse InstrumentResponse::gaussian(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(Errc::InvalidArgument, "gaussian width must be positive");
  }
  const auto half = static_cast<std::size_t>(std::ceil(4.0 * sigma));
  std::vector<double> h(2 * half + 1);
  for (std::size_t u = 0; u < h.size(); ++u) {
    const double d = static_cast<double>(u) - static_cast<double>(half);
    h[u] = std::exp(-0.5 * d * d / (sigma * sigma));
  }
  return InstrumentResponse(std::move(h), static_cast<double>(half));
}

InstrumentResponse InstrumentResponse::from_samples(std::vector<double> samples) {
  if (samples.empty()) throw Error(Errc::InvalidArgument, "impulse response is empty");
  const auto peak = std::max_element(samples.begin(), samples.end()) - samples.begin();
  return InstrumentResponse(std::move(samples), static_cast<double>(peak));
}

FrequencyScheme::FrequencyScheme(std::size_t T, std::size_t m) : T_(T), m_(m) {
  if (T < 2) throw Error(Errc::InvalidArgument, "T must be at least 2");
  if (m < 1 || m > T - 1) {
    throw Error(Errc::InvalidArgument,
                "sketch size must satisfy 1 <= m <= T-1 (m=" + std::to_string(m) + ")");
  }
}

std::vector<double> FrequencyScheme::frequencies() const {
  std::vector<double> w(m_);
  for (std::size_t i = 0; i < m_; ++i) w[i] = frequency(i);
  return w;
}

double PixelParams::signal_mass() const noexcept {
  double s = 0.0;
  for (const auto& surf : surfaces) s += surf.intensity;
  return s;
}

PixelParams PixelParams::from_surfaces(std::vector<Surface> surfaces) {
  PixelParams p;
  p.surfaces = std::move(surfaces);
  std::sort(p.surfaces.begin(), p.surfaces.end(),
            [](const Surface& a, const Surface& b) { return a.depth < b.depth; });
  p.background = std::max(0.0, 1.0 - p.signal_mass());
  return p;
}

void validate(const PixelParams& params, std::size_t T, double min_separation) {
  const double period = static_cast<double>(T);
  double total = params.background;
  if (!(params.background >= 0.0)) throw Error(Errc::InvalidArgument, "background weight < 0");
  for (std::size_t k = 0; k < params.surfaces.size(); ++k) {
    const auto& s = params.surfaces[k];
    if (!(s.depth >= 0.0 && s.depth < period)) {
      throw Error(Errc::InvalidArgument, "surface depth outside [0, T)");
    }
    if (!(s.intensity >= 0.0)) throw Error(Errc::InvalidArgument, "surface intensity < 0");
    if (k > 0) {
      if (s.depth < params.surfaces[k - 1].depth) {
        throw Error(Errc::InvalidArgument, "surface depths are not sorted");
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (circular_distance(s.depth, params.surfaces[j].depth, period) < min_separation) {
        throw Error(Errc::InvalidArgument, "surfaces closer than the minimum separation");
      }
    }
    total += s.intensity;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(Errc::InvalidArgument, "mixture weights do not sum to one");
  }
}

double circular_distance(double a, double b, double period) noexcept {
  double d = std::fmod(std::abs(a - b), period);
  return std::min(d, period - d);
}

double wrap_depth(double depth, double period) noexcept {
  double w = std::fmod(depth, period);
  if (w < 0.0) w += period;
  if (w >= period) w = 0.0;
  return w;
}

Sketch::Sketch(std::vector<Complex> values, std::uint64_t count)
    : values_(std::move(values)), count_(count) {}

SketchModel::SketchModel(FrequencyScheme scheme, InstrumentResponse irf)
    : scheme_(scheme), irf_(std::move(irf)) {
  if (irf_.length() > scheme_.T()) {
    throw Error(Errc::InvalidArgument, "impulse response longer than the time axis");
  }
  omega_ = scheme_.frequencies();
  spectrum_ = irf_fourier(irf_, scheme_);
  response_.resize(scheme_.m());
  background_.resize(scheme_.m());
  for (std::size_t l = 0; l < scheme_.m(); ++l) {
    response_[l] = spectrum_[l] * std::exp(-kI * omega_[l] * irf_.center());
    background_[l] = background_cf(omega_[l], scheme_.T());
  }
}

void SketchModel::atom(double depth, std::span<Complex> out) const {
  for (std::size_t l = 0; l < out.size(); ++l) {
    out[l] = response_[l] * std::polar(1.0, omega_[l] * depth);
  }
}

double SketchModel::default_min_separation() const noexcept {
  return std::max(1.0, 2.0 * irf_.width());
}

Complex background_cf(double omega, std::size_t T) noexcept {
  const double period = static_cast<double>(T);
  double reduced = std::fmod(omega, kTwoPi);
  if (reduced < 0.0) reduced += kTwoPi;
  if (reduced == 0.0) return {1.0, 0.0};
  // (1/T) sum_{x<T} e^{i w x} = e^{i w (T-1)/2} sin(w T/2) / (T sin(w/2))
  const double ratio = std::sin(0.5 * reduced * period) / (period * std::sin(0.5 * reduced));
  return std::polar(1.0, 0.5 * reduced * (period - 1.0)) * ratio;
}

std::vector<Complex> irf_fourier(const InstrumentResponse& irf, const FrequencyScheme& scheme) {
  const auto h = irf.samples();
  std::vector<Complex> out(scheme.m());
  for (std::size_t l = 0; l < scheme.m(); ++l) {
    const double w = scheme.frequency(l);
    Complex acc{0.0, 0.0};
    for (std::size_t u = 0; u < h.size(); ++u) {
      if (h[u] != 0.0) acc += h[u] * std::polar(1.0, w * static_cast<double>(u));
    }
    out[l] = acc / irf.total();
  }
  return out;
}

void model_cf(const PixelParams& params, const SketchModel& model, std::span<Complex> out) {
  const auto g = model.response();
  const auto bg = model.background();
  for (std::size_t l = 0; l < model.m(); ++l) out[l] = params.background * bg[l];
  for (const auto& s : params.surfaces) {
    for (std::size_t l = 0; l < model.m(); ++l) {
      out[l] += s.intensity * g[l] * std::polar(1.0, model.frequency(l) * s.depth);
    }
  }
}

std::vector<Complex> model_cf(const PixelParams& params, const SketchModel& model) {
  std::vector<Complex> out(model.m());
  model_cf(params, model, out);
  return out;
}

std::vector<Complex> model_cf(const PixelParams& params, const FrequencyScheme& scheme,
                              const InstrumentResponse& irf) {
  return model_cf(params, SketchModel(scheme, irf));
}

double sketch_loss(SketchView z, const PixelParams& params, const SketchModel& model) {
  require_nonempty(z);
  require_size(z, model);
  const auto psi = model_cf(params, model);
  double acc = 0.0;
  for (std::size_t l = 0; l < model.m(); ++l) acc += std::norm(z.values[l] - psi[l]);
  return static_cast<double>(z.count) * acc;
}

std::vector<double> sketch_loss_gradient(SketchView z, const PixelParams& params,
                                         const SketchModel& model) {
  require_nonempty(z);
  require_size(z, model);
  const std::size_t K = params.size();
  const std::size_t m = model.m();
  const auto psi = model_cf(params, model);
  const auto bg = model.background();
  const double n = static_cast<double>(z.count);

  std::vector<double> grad(2 * K, 0.0);
  std::vector<Complex> atom(m);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& s = params.surfaces[k];
    model.atom(s.depth, atom);
    double dt = 0.0;
    double da = 0.0;
    for (std::size_t l = 0; l < m; ++l) {
      const Complex r = z.values[l] - psi[l];
      dt += std::real(std::conj(r) * (s.intensity * kI * model.frequency(l) * atom[l]));
      da += std::real(std::conj(r) * (atom[l] - bg[l]));
    }
    grad[k] = -2.0 * n * dt;
    grad[K + k] = -2.0 * n * da;
  }
  return grad;
}

}  // namespace sketchlidar
