#pragma once

// Timing harness separating the sketching phase (linear in photons) from the
// inference phase (which only sees the fixed-size sketches).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sketchlidar/model.hpp"
#include "sketchlidar/regularized.hpp"

namespace sketchlidar {

enum class BenchPhase { Sketching, Inference };

struct BenchRecord {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t T = 0;
  std::size_t m = 0;
  double photons = 0.0;
  double sbr = 0.0;
  BenchPhase phase = BenchPhase::Sketching;
  std::size_t repetition = 0;
  double wall_ms = 0.0;
  /// Peak resident set of the process so far.
  std::uint64_t peak_rss_bytes = 0;
  std::uint64_t seed = 0;
};

struct BenchConfig {
  std::vector<double> photons{10, 50, 100, 500, 1000};
  /// Square scene sides.
  std::vector<std::size_t> sides{141};
  std::vector<std::size_t> sketch_sizes{5, 10};
  std::size_t repetitions = 5;
  std::size_t T = 4613;
  double sbr = 10.0;
  double irf_sigma = 10.0;
  std::uint64_t seed = 1;
  Srt3dOptions options;
};

/// Runs every (side, m, photons, repetition) combination on a plane scene
/// and returns two records per run, sketching first.
std::vector<BenchRecord> run_bench(const BenchConfig& cfg);

/// Current peak resident set size in bytes (0 when unavailable).
std::uint64_t peak_rss_bytes();

void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& records);
/// Per (side, m, photons, phase): mean and min wall time.
void write_bench_summary(std::ostream& os, const std::vector<BenchRecord>& records);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace sketchlidar
