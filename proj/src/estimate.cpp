#include "sketchlidar/estimate.hpp"

#include <string>

#include "sketchlidar/error.hpp"

namespace sketchlidar {

void validate(const PointCloudEstimate& est) {
  if (est.rows == 0 || est.cols == 0) throw Error(Errc::RangeError, "estimate dimensions must be >= 1");
  if (est.pixels.size() != est.pixel_count() || est.counts.size() != est.pixel_count()) {
    throw Error(Errc::RangeError, "estimate pixel lists do not match its dimensions");
  }
  const double period = static_cast<double>(est.T);
  for (std::size_t p = 0; p < est.pixel_count(); ++p) {
    double total = 0.0;
    for (std::size_t k = 0; k < est.pixels[p].size(); ++k) {
      const auto& s = est.pixels[p][k];
      if (!(s.depth >= 0.0 && s.depth < period)) {
        throw Error(Errc::RangeError, "depth outside [0, T) at pixel " + std::to_string(p));
      }
      if (!(s.intensity >= 0.0)) {
        throw Error(Errc::RangeError, "negative intensity at pixel " + std::to_string(p));
      }
      if (k > 0 && s.depth < est.pixels[p][k - 1].depth) {
        throw Error(Errc::RangeError, "unsorted surfaces at pixel " + std::to_string(p));
      }
      total += s.intensity;
    }
    if (total > 1.0 + 1e-9) {
      throw Error(Errc::RangeError, "intensities exceed one at pixel " + std::to_string(p));
    }
  }
}

}  // namespace sketchlidar
