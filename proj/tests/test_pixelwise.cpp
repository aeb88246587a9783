#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "sketchlidar/error.hpp"
#include "sketchlidar/pixelwise.hpp"
#include "sketchlidar/simulator.hpp"

using namespace sketchlidar;

namespace {

Sketch noiseless(const PixelParams& params, const SketchModel& model, std::uint64_t n = 1000) {
  return Sketch(model_cf(params, model), n);
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an exception");
  return Errc::IoError;
}

// g(t) = Re sum_l z_l conj(h_l / H) exp(-i w_l t) with the response spectrum
// centred on its peak, computed from the raw samples.
double backproject_oracle(SketchView z, const InstrumentResponse& irf, std::size_t T, double t) {
  double g = 0.0;
  for (std::size_t l = 1; l <= z.size(); ++l) {
    oracle::cd h{0.0, 0.0};
    for (std::size_t u = 0; u < irf.length(); ++u) {
      h += irf.samples()[u] * std::exp(oracle::cd{0.0, oracle::omega(l, T) * (u - irf.center())});
    }
    h /= irf.total();
    g += std::real(z.values[l - 1] * std::conj(h) * std::exp(oracle::cd{0.0, -oracle::omega(l, T) * t}));
  }
  return g;
}

std::vector<std::uint32_t> draw(std::span<const Surface> truth, std::size_t n, double sbr,
                                const InstrumentResponse& irf, std::size_t T, std::mt19937_64& rng) {
  const IrfSampler sampler(irf);
  std::vector<std::uint32_t> xs;
  while (xs.size() < n) {
    const auto batch = sample_pixel_photons(truth, static_cast<double>(n), sbr, sampler, T, rng);
    xs.insert(xs.end(), batch.begin(), batch.end());
  }
  xs.resize(n);
  return xs;
}

}  // namespace

TEST_CASE("backprojection peaks at the surface") {
  const std::size_t T = 1000;
  const SketchModel model(FrequencyScheme(T, 10), InstrumentResponse::delta());
  const auto z = noiseless(PixelParams::from_surfaces({{437.0, 0.8}}), model);
  const double step = grid_step({}, model);
  const auto grid = depth_grid(model, step);
  const auto g = backproject(z, model, grid);
  REQUIRE(g.size() == grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(g[i] == doctest::Approx(backproject_oracle(z, model.irf(), T, grid[i])).epsilon(1e-12));
  }
  const auto best = std::max_element(g.begin(), g.end()) - g.begin();
  CHECK(oracle::circ(grid[best], 437.0, T) <= step);

  std::vector<double> dense(T * 4);
  for (std::size_t i = 0; i < dense.size(); ++i) dense[i] = i * 0.25;
  const auto gd = backproject(z, model, dense);
  const auto bd = std::max_element(gd.begin(), gd.end()) - gd.begin();
  CHECK(oracle::circ(dense[bd], 437.0, T) <= 0.25);
}

TEST_CASE("backprojection of background-only data is bounded") {
  const std::size_t T = 1000;
  const FrequencyScheme scheme(T, 8);
  const SketchModel model(scheme, InstrumentResponse::gaussian(5.0));
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::uint32_t> d(0, T - 1);
  std::vector<std::uint32_t> xs(500);
  for (auto& x : xs) x = d(rng);
  const auto z = sketch_from_list(xs, scheme);
  double zmax = 0.0;
  for (auto v : z.values()) zmax = std::max(zmax, std::abs(v));
  const auto g = backproject(z, model, depth_grid(model, 1.0));
  for (double v : g) CHECK(std::abs(v) <= 8 * zmax + 1e-12);
}

TEST_CASE("init_depths") {
  const std::size_t T = 1000;
  const SketchModel model(FrequencyScheme(T, 10), InstrumentResponse::gaussian(3.0));
  FitOptions opts;
  const double step = grid_step(opts, model);

  const auto one = noiseless(PixelParams::from_surfaces({{612.3, 0.7}}), model);
  const auto d1 = init_depths(one, model, 1, opts);
  REQUIRE(d1.size() == 1);
  CHECK(oracle::circ(d1[0], 612.3, T) <= step);

  const auto two = noiseless(PixelParams::from_surfaces({{200.0, 0.4}, {600.0, 0.4}}), model);
  const auto d2 = init_depths(two, model, 2, opts);
  REQUIRE(d2.size() == 2);
  CHECK(oracle::circ(d2[0], 200.0, T) <= step);
  CHECK(oracle::circ(d2[1], 600.0, T) <= step);

  const Sketch flat(std::vector<Complex>(10), 50);
  CHECK(init_depths(flat, model, 2, opts).empty());

  CHECK(code_of([&] { init_depths(Sketch(10), model, 1, opts); }) == Errc::EmptySketch);
}

TEST_CASE("a spurious second surface is pruned") {
  const std::size_t T = 1000;
  const SketchModel model(FrequencyScheme(T, 10), InstrumentResponse::gaussian(3.0));
  FitOptions opts;
  opts.max_surfaces = 2;
  const auto z = noiseless(PixelParams::from_surfaces({{612.3, 0.7}}), model);
  const auto fit = fit_pixel(z, model, opts);
  REQUIRE(fit.params.size() == 1);
  CHECK(fit.params.surfaces[0].depth == doctest::Approx(612.3).epsilon(1e-8));
}

TEST_CASE("solve_alpha") {
  const std::size_t T = 153;
  const SketchModel model(FrequencyScheme(T, 10), InstrumentResponse::gaussian(2.0));
  const std::vector<double> depths{30.0, 60.0};
  const auto z = noiseless(PixelParams::from_surfaces({{30.0, 0.4}, {60.0, 0.3}}), model);
  const auto alpha = solve_alpha(z, depths, model);
  REQUIRE(alpha.size() == 2);
  CHECK(std::abs(alpha[0] - 0.4) < 1e-8);
  CHECK(std::abs(alpha[1] - 0.3) < 1e-8);

  const Sketch zero(std::vector<Complex>(10), 10);
  for (double a : solve_alpha(zero, depths, model)) CHECK(a == 0.0);

  const std::vector<double> close{30.0, 30.001};
  CHECK(code_of([&] { solve_alpha(z, close, model); }) == Errc::IllConditioned);
}

TEST_CASE("single-depth intensity matches the scalar least-squares formula") {
  const std::size_t T = 500;
  const std::size_t m = 6;
  const SketchModel model(FrequencyScheme(T, m), InstrumentResponse::delta());
  std::mt19937_64 rng(12);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int trial = 0; trial < 50; ++trial) {
    const double t = 100.0 + trial * 7.3;
    const double a = 0.2 + 0.01 * trial;
    std::vector<Complex> z(m);
    double num = 0.0;
    for (std::size_t l = 1; l <= m; ++l) {
      const oracle::cd atom = std::exp(oracle::cd{0.0, oracle::omega(l, T) * t});
      z[l - 1] = a * atom + Complex{noise(rng), noise(rng)};
      num += std::real(std::conj(atom) * z[l - 1]);
    }
    const double expect = std::clamp(num / static_cast<double>(m), 0.0, 1.0);
    const std::vector<double> depth{t};
    const auto alpha = solve_alpha(Sketch(z, 100), depth, model);
    CHECK(std::abs(alpha[0] - expect) < 1e-10);
  }
}

TEST_CASE("noiseless two-surface fit") {
  const std::size_t T = 153;
  const SketchModel model(FrequencyScheme(T, 10), InstrumentResponse::gaussian(2.0));
  FitOptions opts;
  opts.max_surfaces = 2;
  const auto z = noiseless(PixelParams::from_surfaces({{30.0, 0.4}, {60.0, 0.3}}), model);
  const auto fit = fit_pixel(z, model, opts);
  REQUIRE(fit.params.size() == 2);
  CHECK(std::abs(fit.params.surfaces[0].depth - 30.0) < 1e-3);
  CHECK(std::abs(fit.params.surfaces[1].depth - 60.0) < 1e-3);
  CHECK(std::abs(fit.params.surfaces[0].intensity - 0.4) < 1e-4);
  CHECK(std::abs(fit.params.surfaces[1].intensity - 0.3) < 1e-4);
  CHECK(std::abs(fit.params.background - 0.3) < 1e-4);
  CHECK(fit.loss < 1e-12);
}

TEST_CASE("fit_pixel errors") {
  const std::size_t T = 153;
  const SketchModel model(FrequencyScheme(T, 3), InstrumentResponse::gaussian(2.0));
  FitOptions opts;
  CHECK(code_of([&] { fit_pixel(Sketch(3), model, opts); }) == Errc::EmptySketch);

  const auto z = noiseless(PixelParams::from_surfaces({{30.0, 0.4}}), model);
  opts.max_surfaces = 2;
  CHECK(code_of([&] { fit_pixel(z, model, opts); }) == Errc::InvalidArgument);

  opts.max_surfaces = 1;
  opts.grid_step = static_cast<double>(T) / 6.0 + 1.0;
  CHECK(code_of([&] { fit_pixel(z, model, opts); }) == Errc::InvalidArgument);

  const Sketch flat(std::vector<Complex>(3), 50);
  opts.grid_step = 0.0;
  CHECK(code_of([&] { fit_pixel(flat, model, opts); }) == Errc::NoSurfaceFound);
}

TEST_CASE("closed-form single-surface depth") {
  const std::size_t T = 4613;
  const FrequencyScheme scheme(T, 5);
  const SketchModel delta(scheme, InstrumentResponse::delta());
  const std::vector<std::uint32_t> one{3210};
  CHECK(closed_form_depth_k1(sketch_from_list(one, scheme), delta) == doctest::Approx(3210.0).epsilon(1e-12));

  const auto z = noiseless(PixelParams::from_surfaces({{1000.0, 0.5}}), delta);
  CHECK(std::abs(closed_form_depth_k1(z, delta) - 1000.0) < 1e-9);

  const Sketch zero(std::vector<Complex>(5), 10);
  CHECK(code_of([&] { closed_form_depth_k1(zero, delta); }) == Errc::ZeroMagnitude);

  const auto irf = InstrumentResponse::gaussian(10.0);
  const SketchModel model(scheme, irf);
  const auto scene = SceneReference::plane(1, 1000, T, 2306.0);
  const auto frame = simulate_frame(scene, {1000.0, std::numeric_limits<double>::infinity(), irf, 21});
  const auto sketches = sketch_frame(frame, scheme);
  int within = 0;
  for (std::size_t p = 0; p < 1000; ++p) {
    within += oracle::circ(closed_form_depth_k1(sketches.view(p), model), 2306.0, T) <= 1.0;
  }
  CHECK(within >= 990);
}

TEST_CASE("accepted iterations never increase the loss") {
  const std::size_t T = 1000;
  const FrequencyScheme scheme(T, 10);
  const auto irf = InstrumentResponse::gaussian(4.0);
  const SketchModel model(scheme, irf);
  std::mt19937_64 rng(2);
  const std::vector<Surface> truth{{300.0, 0.5}, {700.0, 0.5}};
  FitOptions opts;
  opts.max_surfaces = 2;
  for (int trial = 0; trial < 30; ++trial) {
    const auto z = sketch_from_list(draw(truth, 300, 1.0, irf, T, rng), scheme);
    std::vector<double> trace;
    refine_pixel(z, model, {280.0 + trial, 730.0 - trial}, opts, &trace);
    REQUIRE(trace.size() >= 1);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1]);
  }
}

TEST_CASE("shifting the stamps shifts the depths") {
  const std::size_t T = 1000;
  const FrequencyScheme scheme(T, 10);
  const auto irf = InstrumentResponse::gaussian(4.0);
  const SketchModel model(scheme, irf);
  std::mt19937_64 rng(6);
  FitOptions opts;
  opts.max_surfaces = 2;
  const std::vector<Surface> truth{{250.0, 0.6}, {520.0, 0.4}};
  for (int trial = 0; trial < 20; ++trial) {
    auto xs = draw(truth, 400, 2.0, irf, T, rng);
    const auto base = fit_pixel(sketch_from_list(xs, scheme), model, opts);
    const std::uint32_t s = 37 + 41 * trial;
    for (auto& x : xs) x = (x + s) % T;
    const auto moved = fit_pixel(sketch_from_list(xs, scheme), model, opts);
    REQUIRE(base.params.size() == moved.params.size());
    // Compare as circular sets since the shift can change the sorted order.
    for (const auto& a : base.params.surfaces) {
      double best = 1e9;
      double inten = -1.0;
      for (const auto& b : moved.params.surfaces) {
        const double d = oracle::circ(a.depth + s, b.depth, T);
        if (d < best) {
          best = d;
          inten = b.intensity;
        }
      }
      CHECK(best < 1e-4);
      CHECK(std::abs(inten - a.intensity) < 1e-6);
    }
  }
}

TEST_CASE("error shrinks with more photons") {
  const std::size_t T = 4613;
  const FrequencyScheme scheme(T, 5);
  const auto irf = InstrumentResponse::gaussian(10.0);
  const SketchModel model(scheme, irf);
  std::mt19937_64 rng(13);
  const std::vector<Surface> truth{{2306.0, 1.0}};
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> small;
  std::vector<double> large;
  for (int p = 0; p < 500; ++p) {
    const auto a = fit_pixel(sketch_from_list(draw(truth, 250, inf, irf, T, rng), scheme), model, {});
    const auto b = fit_pixel(sketch_from_list(draw(truth, 4000, inf, irf, T, rng), scheme), model, {});
    small.push_back(oracle::circ(a.params.surfaces[0].depth, 2306.0, T));
    large.push_back(oracle::circ(b.params.surfaces[0].depth, 2306.0, T));
  }
  CHECK(oracle::median(large) <= 0.5 * oracle::median(small));
}

TEST_CASE("full-period background leaves the depths unchanged") {
  const std::size_t T = 500;
  const FrequencyScheme scheme(T, 10);
  const auto irf = InstrumentResponse::gaussian(3.0);
  const SketchModel model(scheme, irf);
  std::mt19937_64 rng(17);
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<Surface> truth{{180.0, 1.0}};
  for (std::size_t u : {1u, 2u}) {
    std::vector<double> shifts;
    for (int p = 0; p < 50; ++p) {
      auto xs = draw(truth, 200, inf, irf, T, rng);
      const auto base = fit_pixel(sketch_from_list(xs, scheme), model, {});
      for (std::size_t k = 0; k < u; ++k) {
        for (std::uint32_t x = 0; x < T; ++x) xs.push_back(x);
      }
      const auto with_bg = fit_pixel(sketch_from_list(xs, scheme), model, {});
      shifts.push_back(oracle::circ(base.params.surfaces[0].depth, with_bg.params.surfaces[0].depth, T));
      const double scale = 200.0 / (200.0 + u * T);
      // The background-free fit saturates at intensity one.
      CHECK(std::abs(with_bg.params.surfaces[0].intensity - scale) < 0.01);
    }
    CHECK(oracle::median(shifts) <= 0.5);
  }
}

TEST_CASE("frame fitting leaves dark pixels empty") {
  const std::size_t T = 300;
  const FrequencyScheme scheme(T, 5);
  const auto irf = InstrumentResponse::gaussian(2.0);
  const SketchModel model(scheme, irf);
  SceneReference scene = SceneReference::plane(3, 3, T, 100.0);
  scene.flux = std::vector<double>(9, 1.0);
  scene.flux[4] = 0.0;
  const auto frame = sketch_frame(simulate_frame(scene, {100.0, 10.0, irf, 1}), scheme);
  const auto est = fit_frame(frame, model, {});
  CHECK(est.pixels[4].empty());
  CHECK(est.counts[4] == 0);
  for (std::size_t p = 0; p < 9; ++p) {
    if (p == 4) continue;
    REQUIRE(est.pixels[p].size() == 1);
    CHECK(oracle::circ(est.pixels[p][0].depth, 100.0, T) < 2.0);
    CHECK(est.counts[p] == frame.count(p));
  }
  CHECK_NOTHROW(validate(est));
}
