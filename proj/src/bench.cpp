#include "sketchlidar/bench.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <map>
#include <ostream>
#include <tuple>

#include "sketchlidar/simulator.hpp"
#include "sketchlidar/sketch.hpp"

namespace sketchlidar {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

const char* phase_name(BenchPhase phase) {
  return phase == BenchPhase::Sketching ? "sketching" : "inference";
}

}  // namespace

std::uint64_t peak_rss_bytes() {
  rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) != 0) return 0;
  return static_cast<std::uint64_t>(usage.ru_maxrss) * 1024u;
}

std::vector<BenchRecord> run_bench(const BenchConfig& cfg) {
  std::vector<BenchRecord> records;
  const auto irf = InstrumentResponse::gaussian(cfg.irf_sigma);
  for (std::size_t side : cfg.sides) {
    const auto scene = SceneReference::plane(side, side, cfg.T, static_cast<double>(cfg.T) / 2.0);
    for (std::size_t m : cfg.sketch_sizes) {
      const FrequencyScheme scheme(cfg.T, m);
      const SketchModel model(scheme, irf);
      for (double photons : cfg.photons) {
        for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
          const std::uint64_t seed = cfg.seed + rep;
          const auto frame = simulate_frame(scene, {photons, cfg.sbr, irf, seed});
          BenchRecord base{side, side, cfg.T, m, photons, cfg.sbr, BenchPhase::Sketching, rep, 0.0, 0, seed};

          auto start = Clock::now();
          const auto sketches = sketch_frame(frame, scheme);
          base.wall_ms = elapsed_ms(start);
          base.peak_rss_bytes = peak_rss_bytes();
          records.push_back(base);

          start = Clock::now();
          const auto est = reconstruct(sketches, model, cfg.options);
          base.phase = BenchPhase::Inference;
          base.wall_ms = elapsed_ms(start);
          base.peak_rss_bytes = peak_rss_bytes();
          records.push_back(base);
          (void)est;
        }
      }
    }
  }
  return records;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& records) {
  os << "rows,cols,T,m,photons,sbr,phase,repetition,wall_ms,peak_rss_bytes,seed\n";
  for (const auto& r : records) {
    os << r.rows << ',' << r.cols << ',' << r.T << ',' << r.m << ',' << r.photons << ',' << r.sbr
       << ',' << phase_name(r.phase) << ',' << r.repetition << ',' << r.wall_ms << ','
       << r.peak_rss_bytes << ',' << r.seed << '\n';
  }
}

void write_bench_summary(std::ostream& os, const std::vector<BenchRecord>& records) {
  struct Acc {
    double sum = 0.0;
    double min = 0.0;
    std::size_t n = 0;
  };
  using Key = std::tuple<std::size_t, std::size_t, double, int>;
  std::map<Key, Acc> groups;
  for (const auto& r : records) {
    auto& a = groups[{r.rows, r.m, r.photons, static_cast<int>(r.phase)}];
    a.min = a.n == 0 ? r.wall_ms : std::min(a.min, r.wall_ms);
    a.sum += r.wall_ms;
    ++a.n;
  }
  os << "side,m,photons,phase,mean_ms,min_ms,runs\n";
  for (const auto& [key, a] : groups) {
    const auto& [side, m, photons, phase] = key;
    os << side << ',' << m << ',' << photons << ',' << phase_name(static_cast<BenchPhase>(phase))
       << ',' << a.sum / static_cast<double>(a.n) << ',' << a.min << ',' << a.n << '\n';
  }
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = std::min(x.size(), y.size());
  if (n < 2) return {};
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit fit;
  if (sxx <= 0.0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

}  // namespace sketchlidar
