#include "sketchlidar/sketch.hpp"

#include <string>

#include "sketchlidar/error.hpp"

namespace sketchlidar {

PhotonFrame::PhotonFrame(std::size_t rows, std::size_t cols, std::size_t T)
    : rows_(rows), cols_(cols), T_(T), offsets_{0} {
  if (rows == 0 || cols == 0) throw Error(Errc::InvalidArgument, "frame dimensions must be >= 1");
  if (T == 0) throw Error(Errc::InvalidArgument, "T must be positive");
  offsets_.reserve(rows * cols + 1);
}

PhotonFrame::PhotonFrame(std::size_t rows, std::size_t cols, std::size_t T,
                         const std::vector<std::vector<std::uint32_t>>& pixels)
    : PhotonFrame(rows, cols, T) {
  if (pixels.size() != rows * cols) {
    throw Error(Errc::DimensionMismatch, "pixel list does not match frame dimensions");
  }
  for (const auto& p : pixels) push_pixel(p);
}

void PhotonFrame::push_pixel(std::span<const std::uint32_t> stamps) {
  if (complete()) throw Error(Errc::DimensionMismatch, "photon frame already complete");
  for (auto x : stamps) {
    if (x >= T_) {
      throw Error(Errc::StampOutOfRange,
                  "stamp " + std::to_string(x) + " outside [0, " + std::to_string(T_ - 1) + "]");
    }
  }
  stamps_.insert(stamps_.end(), stamps.begin(), stamps.end());
  offsets_.push_back(stamps_.size());
}

SketchFrame::SketchFrame(std::size_t rows, std::size_t cols, FrequencyScheme scheme)
    : rows_(rows),
      cols_(cols),
      scheme_(scheme),
      values_(rows * cols * scheme.m(), Complex{0.0, 0.0}),
      counts_(rows * cols, 0) {
  if (rows == 0 || cols == 0) throw Error(Errc::InvalidArgument, "frame dimensions must be >= 1");
}

Sketch SketchFrame::sketch(std::size_t pixel) const {
  auto v = view(pixel);
  return Sketch(std::vector<Complex>(v.values.begin(), v.values.end()), v.count);
}

void SketchFrame::set(std::size_t pixel, SketchView s) {
  if (s.size() != m()) throw Error(Errc::SchemeMismatch, "sketch size differs from frame");
  auto dst = mutable_values(pixel);
  std::copy(s.values.begin(), s.values.end(), dst.begin());
  counts_[pixel] = s.count;
}

std::uint64_t SketchFrame::total_photons() const noexcept {
  std::uint64_t total = 0;
  for (auto n : counts_) total += n;
  return total;
}

Complex stamp_phasor(std::uint64_t x, std::size_t l, std::size_t T) noexcept {
  const std::uint64_t reduced = (static_cast<std::uint64_t>(l) * x) % T;
  return std::polar(1.0, kTwoPi * static_cast<double>(reduced) / static_cast<double>(T));
}

void update_sketch(Sketch& sketch, std::int64_t stamp, const FrequencyScheme& scheme) {
  if (stamp < 0 || static_cast<std::uint64_t>(stamp) >= scheme.T()) {
    throw Error(Errc::OutOfRange, "stamp " + std::to_string(stamp) + " outside the time axis");
  }
  if (sketch.size() != scheme.m()) throw Error(Errc::SchemeMismatch, "sketch size differs from m");
  const double inv = 1.0 / static_cast<double>(sketch.count() + 1);
  auto z = sketch.mutable_values();
  for (std::size_t l = 0; l < scheme.m(); ++l) {
    z[l] += (stamp_phasor(static_cast<std::uint64_t>(stamp), l + 1, scheme.T()) - z[l]) * inv;
  }
  sketch.set_count(sketch.count() + 1);
}

Sketch sketch_from_list(std::span<const std::uint32_t> stamps, const FrequencyScheme& scheme) {
  Sketch s(scheme.m());
  if (stamps.empty()) return s;
  auto z = s.mutable_values();
  for (auto x : stamps) {
    if (x >= scheme.T()) throw Error(Errc::OutOfRange, "stamp outside the time axis");
    for (std::size_t l = 0; l < scheme.m(); ++l) z[l] += stamp_phasor(x, l + 1, scheme.T());
  }
  const double inv = 1.0 / static_cast<double>(stamps.size());
  for (auto& v : z) v *= inv;
  s.set_count(stamps.size());
  return s;
}

Sketch merge_sketches(SketchView a, SketchView b) {
  if (a.size() != b.size()) throw Error(Errc::SchemeMismatch, "cannot merge sketches of different m");
  const std::uint64_t n = a.count + b.count;
  std::vector<Complex> z(a.size(), Complex{0.0, 0.0});
  if (n == 0) return Sketch(std::move(z), 0);
  if (b.count == 0) return Sketch({a.values.begin(), a.values.end()}, a.count);
  if (a.count == 0) return Sketch({b.values.begin(), b.values.end()}, b.count);
  const double wa = static_cast<double>(a.count) / static_cast<double>(n);
  const double wb = static_cast<double>(b.count) / static_cast<double>(n);
  for (std::size_t l = 0; l < z.size(); ++l) z[l] = wa * a.values[l] + wb * b.values[l];
  return Sketch(std::move(z), n);
}

Sketch sketch_from_histogram(std::span<const std::uint64_t> counts, std::size_t bin_width,
                             const FrequencyScheme& scheme) {
  if (bin_width == 0 || counts.size() * bin_width != scheme.T()) {
    throw Error(Errc::BadBinning, "histogram bins * width must equal T");
  }
  std::uint64_t n = 0;
  for (auto c : counts) n += c;
  if (n == 0) throw Error(Errc::EmptyHistogram, "histogram has no counts");

  Sketch s(scheme.m());
  auto z = s.mutable_values();
  const double offset = 0.5 * static_cast<double>(bin_width - 1);
  for (std::size_t b = 0; b < counts.size(); ++b) {
    if (counts[b] == 0) continue;
    const double center = static_cast<double>(b * bin_width) + offset;
    for (std::size_t l = 0; l < scheme.m(); ++l) {
      z[l] += static_cast<double>(counts[b]) * std::polar(1.0, scheme.frequency(l) * center);
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& v : z) v *= inv;
  s.set_count(n);
  return s;
}

SketchAccumulator::SketchAccumulator(FrequencyScheme scheme) : scheme_(scheme), table_(scheme.T()) {
  for (std::size_t j = 0; j < scheme.T(); ++j) table_[j] = stamp_phasor(j, 1, scheme.T());
}

void SketchAccumulator::add(std::span<Complex> values, std::uint64_t& count,
                            std::uint32_t stamp) const {
  const std::size_t T = scheme_.T();
  if (stamp >= T) throw Error(Errc::OutOfRange, "stamp outside the time axis");
  const double inv = 1.0 / static_cast<double>(count + 1);
  std::size_t phase = 0;
  for (std::size_t l = 0; l < values.size(); ++l) {
    phase += stamp;
    if (phase >= T) phase %= T;
    values[l] += (table_[phase] - values[l]) * inv;
  }
  ++count;
}

void SketchAccumulator::add(Sketch& sketch, std::uint32_t stamp) const {
  std::uint64_t n = sketch.count();
  add(sketch.mutable_values(), n, stamp);
  sketch.set_count(n);
}

SketchFrame sketch_frame(const PhotonFrame& photons, const FrequencyScheme& scheme) {
  if (photons.T() != scheme.T()) throw Error(Errc::SchemeMismatch, "photon frame T differs from scheme");
  SketchFrame out(photons.rows(), photons.cols(), scheme);
  SketchAccumulator acc(scheme);
  for (std::size_t p = 0; p < photons.pixel_count(); ++p) {
    auto z = out.mutable_values(p);
    std::uint64_t n = 0;
    for (auto x : photons.stamps(p)) acc.add(z, n, x);
    out.set_count(p, n);
  }
  return out;
}

SketchFrame merge_frames(const SketchFrame& a, const SketchFrame& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(Errc::DimensionMismatch, "sketch frames differ in size");
  }
  if (!(a.scheme() == b.scheme())) throw Error(Errc::SchemeMismatch, "sketch frames differ in scheme");
  SketchFrame out(a.rows(), a.cols(), a.scheme());
  for (std::size_t p = 0; p < a.pixel_count(); ++p) out.set(p, merge_sketches(a.view(p), b.view(p)));
  return out;
}

}  // namespace sketchlidar
