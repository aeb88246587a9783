#pragma once

// Observation model for single-photon lidar time-of-arrival data and its
// characteristic function sampled on a background-blind frequency grid.
//
// Time is measured in fine bins on the grid {0, ..., T-1}. A pixel observes a
// mixture of K surface returns, each a copy of the instrument response centred
// on the surface depth, plus a uniform background. The sketch of a pixel is the
// empirical characteristic function of its time stamps at the frequencies
// 2*pi*l/T, l = 1..m, where the uniform background has zero contribution.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sketchlidar {

using Complex = std::complex<double>;

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Discrete impulse response h(u), u = 0..L-1. Depths refer to the response
/// peak, so `center()` is the offset of the peak inside the sample window.
class InstrumentResponse {
 public:
  InstrumentResponse(std::vector<double> samples, double center);

  static InstrumentResponse delta();
  /// Gaussian sampled on 2*ceil(4 sigma)+1 integer offsets, centred.
  static InstrumentResponse gaussian(double sigma);
  /// Arbitrary samples; the center is placed on the (first) maximum.
  static InstrumentResponse from_samples(std::vector<double> samples);

  std::span<const double> samples() const noexcept { return samples_; }
  std::size_t length() const noexcept { return samples_.size(); }
  double total() const noexcept { return total_; }
  double center() const noexcept { return center_; }
  /// Standard deviation of the normalized response, in bins.
  double width() const noexcept { return width_; }

 private:
  std::vector<double> samples_;
  double total_ = 0.0;
  double center_ = 0.0;
  double width_ = 0.0;
};

/// Frequencies omega_l = 2 pi l / T for l = 1..m.
class FrequencyScheme {
 public:
  FrequencyScheme(std::size_t T, std::size_t m);

  std::size_t T() const noexcept { return T_; }
  std::size_t m() const noexcept { return m_; }
  /// Zero-based: frequency(0) is omega_1.
  double frequency(std::size_t index) const noexcept {
    return kTwoPi * static_cast<double>(index + 1) / static_cast<double>(T_);
  }
  std::vector<double> frequencies() const;

  bool operator==(const FrequencyScheme&) const = default;

 private:
  std::size_t T_;
  std::size_t m_;
};

struct Surface {
  double depth = 0.0;      ///< peak position in fine bins, [0, T)
  double intensity = 0.0;  ///< probability that a photon comes from this surface

  bool operator==(const Surface&) const = default;
};

/// Mixture parameters of one pixel. `background` is the probability that a
/// detected photon is a background count; together with the surface
/// intensities it sums to one.
struct PixelParams {
  std::vector<Surface> surfaces;
  double background = 1.0;

  /// Builds parameters with the background set to the remaining mass.
  static PixelParams from_surfaces(std::vector<Surface> surfaces);

  std::size_t size() const noexcept { return surfaces.size(); }
  double signal_mass() const noexcept;
};

/// Throws InvalidArgument when params break the mixture invariants.
void validate(const PixelParams& params, std::size_t T, double min_separation);

/// Circular distance between two depths on the period-T time axis.
double circular_distance(double a, double b, double period) noexcept;

/// Wraps a depth into [0, period).
double wrap_depth(double depth, double period) noexcept;

/// Non-owning view of a sketch: m complex values plus the photon count.
struct SketchView {
  std::span<const Complex> values;
  std::uint64_t count = 0;

  std::size_t size() const noexcept { return values.size(); }
  bool empty() const noexcept { return count == 0; }
};

/// Empirical characteristic function of one pixel. An empty sketch (count 0)
/// holds only zeros.
class Sketch {
 public:
  Sketch() = default;
  explicit Sketch(std::size_t m) : values_(m, Complex{0.0, 0.0}) {}
  Sketch(std::vector<Complex> values, std::uint64_t count);

  std::size_t size() const noexcept { return values_.size(); }
  std::uint64_t count() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }

  std::span<const Complex> values() const noexcept { return values_; }
  std::span<Complex> mutable_values() noexcept { return values_; }
  void set_count(std::uint64_t n) noexcept { count_ = n; }

  SketchView view() const noexcept { return {values_, count_}; }
  operator SketchView() const noexcept { return view(); }

 private:
  std::vector<Complex> values_;
  std::uint64_t count_ = 0;
};

/// Frequency scheme paired with an instrument response, with the response's
/// Fourier samples precomputed. All solvers work against this.
class SketchModel {
 public:
  SketchModel(FrequencyScheme scheme, InstrumentResponse irf);

  const FrequencyScheme& scheme() const noexcept { return scheme_; }
  const InstrumentResponse& irf() const noexcept { return irf_; }
  std::size_t T() const noexcept { return scheme_.T(); }
  std::size_t m() const noexcept { return scheme_.m(); }
  double period() const noexcept { return static_cast<double>(scheme_.T()); }
  double frequency(std::size_t index) const noexcept { return omega_[index]; }

  /// h_hat(omega_l) / H with the sample window starting at zero.
  std::span<const Complex> spectrum() const noexcept { return spectrum_; }
  /// Spectrum of the response re-centred on its peak, so that a surface at
  /// depth t contributes response()[l] * exp(i omega_l t).
  std::span<const Complex> response() const noexcept { return response_; }
  /// Background characteristic function at each scheme frequency.
  std::span<const Complex> background() const noexcept { return background_; }

  /// response()[l] * exp(i omega_l depth), written into `out` (length m).
  void atom(double depth, std::span<Complex> out) const;

  /// Default minimum separation between two surfaces of one pixel: twice the
  /// response width, never below one bin.
  double default_min_separation() const noexcept;

 private:
  FrequencyScheme scheme_;
  InstrumentResponse irf_;
  std::vector<double> omega_;
  std::vector<Complex> spectrum_;
  std::vector<Complex> response_;
  std::vector<Complex> background_;
};

/// Characteristic function of the discrete uniform law on {0, ..., T-1}.
///
/// This is the finite geometric sum (1/T) sum_x exp(i omega x). It vanishes at
/// every omega = 2 pi l / T with l not a multiple of T. The continuous-uniform
/// approximation exp(i omega T/2) sinc(omega T/2) (unnormalized sinc) has the
/// same zeros but differs elsewhere.
Complex background_cf(double omega, std::size_t T) noexcept;

/// (1/H) sum_u h(u) exp(i omega_l u) for each scheme frequency.
std::vector<Complex> irf_fourier(const InstrumentResponse& irf, const FrequencyScheme& scheme);

/// Model characteristic function at each scheme frequency.
std::vector<Complex> model_cf(const PixelParams& params, const SketchModel& model);
std::vector<Complex> model_cf(const PixelParams& params, const FrequencyScheme& scheme,
                              const InstrumentResponse& irf);
void model_cf(const PixelParams& params, const SketchModel& model, std::span<Complex> out);

/// n * sum_l |z_l - Psi(omega_l)|^2.
double sketch_loss(SketchView z, const PixelParams& params, const SketchModel& model);

/// Gradient of sketch_loss laid out as [d/dt_1..d/dt_K, d/dalpha_1..d/dalpha_K],
/// with the background weight tied to 1 - sum(alpha).
std::vector<double> sketch_loss_gradient(SketchView z, const PixelParams& params,
                                         const SketchModel& model);

}  // namespace sketchlidar
