#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "sketchlidar/error.hpp"
#include "sketchlidar/simulator.hpp"

using namespace sketchlidar;

namespace {

std::vector<double> samples_of(const InstrumentResponse& irf) {
  return {irf.samples().begin(), irf.samples().end()};
}

}  // namespace

TEST_CASE("noise-free delta response puts every stamp on the surface") {
  const IrfSampler sampler(InstrumentResponse::delta());
  std::mt19937_64 rng(1);
  const std::vector<Surface> truth{{500.0, 1.0}};
  const auto xs = sample_pixel_photons(truth, 200.0, std::numeric_limits<double>::infinity(), sampler, 1000, rng);
  CHECK(xs.size() > 100);
  for (auto x : xs) CHECK(x == 500u);
}

TEST_CASE("background-dominated stamps are uniform") {
  const std::size_t T = 100;
  const IrfSampler sampler(InstrumentResponse::gaussian(2.0));
  std::mt19937_64 rng(3);
  const std::vector<Surface> truth{{50.0, 1.0}};
  std::vector<std::uint32_t> xs;
  while (xs.size() < 100000) {
    const auto batch = sample_pixel_photons(truth, 1000.0, 1e-12, sampler, T, rng);
    xs.insert(xs.end(), batch.begin(), batch.end());
  }
  const auto counts = histogram(xs, T, T, 1);
  const double expect = static_cast<double>(xs.size()) / T;
  double chi2 = 0.0;
  for (auto c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // Upper 1% point of chi-square with 99 degrees of freedom.
  CHECK(chi2 < 134.64);
}

TEST_CASE("mean photon count") {
  const auto scene = SceneReference::plane(100, 100, 200, 100.0);
  const auto frame = simulate_frame(scene, {20.0, 2.0, InstrumentResponse::gaussian(1.0), 9});
  const double mean = static_cast<double>(frame.total_photons()) / 1e4;
  CHECK(mean >= 19.7);
  CHECK(mean <= 20.3);
}

TEST_CASE("simulation is deterministic per seed") {
  const auto scene = SceneReference::two_layer(8, 9, 153, 40.0, 100.0, 90.0, 0.5);
  const AcquisitionConfig cfg{30.0, 1.0, InstrumentResponse::gaussian(2.0), 77};
  const auto a = simulate_frame(scene, cfg);
  const auto b = simulate_frame(scene, cfg);
  CHECK(a == b);
  auto other = cfg;
  other.seed = 78;
  CHECK_FALSE(a == simulate_frame(scene, other));
  CHECK(pixel_seed(1, 2) == pixel_seed(1, 2));
  CHECK(pixel_seed(1, 2) != pixel_seed(1, 3));
  CHECK(pixel_seed(1, 2) != pixel_seed(2, 2));
}

TEST_CASE("full-size frame total count") {
  const auto scene = SceneReference::plane(141, 141, 4613, 2306.0);
  const auto frame = simulate_frame(scene, {30.0, 1.0, InstrumentResponse::gaussian(10.0), 2});
  const double expect = 141.0 * 141.0 * 30.0;
  CHECK(std::abs(static_cast<double>(frame.total_photons()) - expect) <= 3.0 * std::sqrt(expect));
  std::size_t outside = 0;
  for (std::size_t p = 0; p < frame.pixel_count(); ++p) {
    for (auto x : frame.stamps(p)) outside += x >= 4613u;
  }
  CHECK(outside == 0);
}

TEST_CASE("two-surface pixels follow the bimodal mixture law") {
  const std::size_t T = 153;
  const auto irf = InstrumentResponse::gaussian(2.0);
  const double sbr = 1.0;
  const IrfSampler sampler(irf);
  // Depth 150 makes the back return wrap around the end of the axis.
  const std::vector<Surface> truth{{40.0, 0.6}, {150.0, 0.4}};
  std::mt19937_64 rng(5);
  std::vector<std::uint32_t> xs;
  while (xs.size() < 1000000) {
    const auto batch = sample_pixel_photons(truth, 5000.0, sbr, sampler, T, rng);
    xs.insert(xs.end(), batch.begin(), batch.end());
  }
  const double a0 = background_weight(sbr);
  const auto pmf = oracle::mixture_pmf(samples_of(irf), static_cast<long>(irf.center()),
                                       {{40, 0.6 * (1 - a0)}, {150, 0.4 * (1 - a0)}}, a0, T);
  CHECK(std::abs(std::accumulate(pmf.begin(), pmf.end(), 0.0) - 1.0) < 1e-12);
  const auto counts = histogram(xs, T, T, 1);
  const double n = static_cast<double>(xs.size());
  for (std::size_t x = 0; x < T; ++x) {
    const double sd = std::sqrt(pmf[x] * (1 - pmf[x]) / n);
    CHECK(std::abs(counts[x] / n - pmf[x]) <= 5.0 * sd + 1e-12);
  }
}

TEST_CASE("signal fraction converges to SBR/(1+SBR)") {
  const std::size_t T = 1000;
  const auto scene = SceneReference::plane(10, 10, T, 500.0);
  const auto frame = simulate_frame(scene, {1000.0, 3.0, InstrumentResponse::delta(), 4});
  std::uint64_t at_surface = 0;
  for (std::size_t p = 0; p < frame.pixel_count(); ++p) {
    for (auto x : frame.stamps(p)) at_surface += x == 500u;
  }
  const double n = static_cast<double>(frame.total_photons());
  // Background stamps land on bin 500 with probability 1/T.
  const double signal = (at_surface - n * 0.25 / T) / n;
  CHECK(std::abs(signal - 0.75) < 0.01);
}

TEST_CASE("fractional depths are dithered to the exact mean") {
  const std::size_t T = 1000;
  const IrfSampler sampler(InstrumentResponse::delta());
  std::mt19937_64 rng(8);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) sum += sampler.sample(300.3, T, rng);
  CHECK(std::abs(sum / n - 300.3) < 0.01);

  std::mt19937_64 rng2(8);
  for (int i = 0; i < 1000; ++i) {
    const auto x = sampler.sample(999.6, T, rng2);
    CHECK((x == 999u || x == 0u));
  }
}

TEST_CASE("surface-less pixels receive only background") {
  SceneReference scene = SceneReference::plane(50, 50, 200, 100.0);
  for (std::size_t p = 0; p < scene.pixel_count(); p += 2) scene.pixels[p].clear();
  const auto frame = simulate_frame(scene, {40.0, 3.0, InstrumentResponse::delta(), 1});
  double empty_total = 0.0;
  for (std::size_t p = 0; p < scene.pixel_count(); p += 2) empty_total += frame.stamps(p).size();
  const double mean = empty_total / 1250.0;
  CHECK(std::abs(mean - 10.0) < 0.5);
}

TEST_CASE("flux map scales the mean count") {
  SceneReference scene = SceneReference::plane(1, 2, 100, 50.0);
  scene.flux = {1.0, 0.0};
  const auto frame = simulate_frame(scene, {50.0, 1.0, InstrumentResponse::delta(), 3});
  CHECK(frame.stamps(0).size() > 0);
  CHECK(frame.stamps(1).empty());
}

TEST_CASE("histogram") {
  const std::vector<std::uint32_t> xs{3, 3, 7, 0, 15};
  const auto h1 = histogram(xs, 16, 16, 1);
  CHECK(std::accumulate(h1.begin(), h1.end(), std::uint64_t{0}) == 5);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK((h1[i] > 0) == (std::find(xs.begin(), xs.end(), i) != xs.end()));
  }
  const auto empty = histogram({}, 16, 4, 4);
  CHECK(empty == std::vector<std::uint64_t>(4, 0));
  CHECK_THROWS_AS(histogram(xs, 16, 5, 3), Error);
  try {
    histogram(xs, 16, 5, 3);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BadBinning);
  }

  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::uint32_t> d(0, 4607);
  std::vector<std::uint32_t> many(5000);
  for (auto& x : many) x = d(rng);
  const auto h = histogram(many, 4608, 288, 16);
  std::vector<std::uint64_t> naive(288, 0);
  for (std::size_t b = 0; b < 288; ++b) {
    for (auto x : many) naive[b] += x >= b * 16 && x < (b + 1) * 16;
  }
  CHECK(h == naive);
}

TEST_CASE("scene validation") {
  auto scene = SceneReference::plane(2, 2, 100, 50.0);
  CHECK_NOTHROW(validate(scene));
  scene.pixels[1][0].depth = 100.0;
  CHECK_THROWS_AS(validate(scene), Error);
  scene = SceneReference::plane(2, 2, 100, 50.0);
  scene.pixels[2][0].intensity = -0.1;
  CHECK_THROWS_AS(validate(scene), Error);
  scene = SceneReference::plane(2, 2, 100, 50.0);
  scene.pixels.pop_back();
  CHECK_THROWS_AS(validate(scene), Error);

  const auto ok = SceneReference::plane(2, 2, 100, 50.0);
  CHECK_THROWS_AS(simulate_frame(ok, {0.0, 1.0, InstrumentResponse::delta(), 0}), Error);
  CHECK_THROWS_AS(simulate_frame(ok, {1.0, 0.0, InstrumentResponse::delta(), 0}), Error);
  const auto tiny = SceneReference::plane(1, 1, 10, 5.0);
  try {
    simulate_frame(tiny, {1.0, 1.0, InstrumentResponse::gaussian(5.0), 0});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DimensionMismatch);
  }
}

TEST_CASE("expected parameters") {
  const std::vector<Surface> truth{{10.0, 0.25}, {60.0, 0.75}};
  const auto p = expected_params(truth, 3.0);
  CHECK(p.background == doctest::Approx(0.25));
  CHECK(p.surfaces[0].intensity == doctest::Approx(0.1875));
  CHECK(p.surfaces[1].intensity == doctest::Approx(0.5625));
  CHECK(background_weight(std::numeric_limits<double>::infinity()) == 0.0);
}
