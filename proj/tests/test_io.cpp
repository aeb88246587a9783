#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>

#include "doctest.h"
#include "sketchlidar/error.hpp"
#include "sketchlidar/io.hpp"

using namespace sketchlidar;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("sketchlidar_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
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

PhotonFrame random_photons(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  std::uniform_int_distribution<std::size_t> period(2, 5000);
  std::uniform_int_distribution<std::size_t> count(0, 12);
  const std::size_t rows = dim(rng), cols = dim(rng), T = period(rng);
  std::uniform_int_distribution<std::uint32_t> stamp(0, static_cast<std::uint32_t>(T - 1));
  PhotonFrame f(rows, cols, T);
  for (std::size_t p = 0; p < rows * cols; ++p) {
    std::vector<std::uint32_t> xs(count(rng));
    for (auto& x : xs) x = stamp(rng);
    f.push_pixel(xs);
  }
  return f;
}

SketchFrame random_sketches(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dim(1, 5);
  std::uniform_int_distribution<std::size_t> msize(1, 12);
  std::uniform_int_distribution<std::uint32_t> stamp(0, 999);
  std::uniform_int_distribution<std::size_t> count(0, 20);
  const FrequencyScheme scheme(1000, msize(rng));
  SketchFrame f(dim(rng), dim(rng), scheme);
  for (std::size_t p = 0; p < f.pixel_count(); ++p) {
    std::vector<std::uint32_t> xs(count(rng));
    for (auto& x : xs) x = stamp(rng);
    f.set(p, sketch_from_list(xs, scheme));
  }
  return f;
}

PointCloudEstimate random_estimate(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dim(1, 5);
  std::uniform_int_distribution<std::size_t> k(0, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointCloudEstimate e(dim(rng), dim(rng), 500);
  for (std::size_t p = 0; p < e.pixel_count(); ++p) {
    const std::size_t K = k(rng);
    for (std::size_t i = 0; i < K; ++i) e.pixels[p].push_back({(i + u(rng)) * 150.0, u(rng) / 3.0});
    e.counts[p] = static_cast<std::uint64_t>(u(rng) * 1e6);
  }
  return e;
}

}  // namespace

TEST_CASE("photon frame round trips") {
  TempDir dir;
  const auto path = dir / "a.phot";

  const PhotonFrame empty(3, 2, 100, std::vector<std::vector<std::uint32_t>>(6));
  write_photon_frame(path, empty);
  CHECK(read_photon_frame(path) == empty);
  CHECK(fs::file_size(path) == kPhotonHeaderBytes + 6 * 4);

  const PhotonFrame known(2, 2, 10, {{1, 2}, {}, {9}, {0, 0, 5}});
  write_photon_frame(path, known);
  const auto bytes = slurp(path);
  const auto back = read_photon_frame(path);
  CHECK(back == known);
  const auto again = dir / "b.phot";
  write_photon_frame(again, back);
  CHECK(slurp(again) == bytes);

  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto f = random_photons(rng);
    write_photon_frame(path, f);
    REQUIRE(read_photon_frame(path) == f);
  }
}

TEST_CASE("photon frame streaming reader") {
  TempDir dir;
  const auto path = dir / "s.phot";
  const PhotonFrame known(2, 2, 10, {{1, 2}, {}, {9}, {0, 0, 5}});
  write_photon_frame(path, known);
  PhotonFrameReader reader(path);
  CHECK(reader.rows() == 2);
  CHECK(reader.T() == 10);
  std::vector<std::uint32_t> xs;
  std::size_t p = 0;
  while (reader.next(xs)) {
    CHECK(std::equal(xs.begin(), xs.end(), known.stamps(p).begin(), known.stamps(p).end()));
    ++p;
  }
  CHECK(p == 4);
  CHECK_NOTHROW(reader.finish());
}

TEST_CASE("corrupt photon frames are rejected") {
  TempDir dir;
  const auto path = dir / "c.phot";
  const PhotonFrame known(2, 2, 10, {{1, 2}, {}, {9}, {0, 0, 5}});
  write_photon_frame(path, known);
  const auto bytes = slurp(path);

  auto bad = bytes;
  bad[0] = 'X';
  spit(path, bad);
  CHECK(code_of([&] { read_photon_frame(path); }) == Errc::BadMagic);

  bad = bytes;
  bad[8] = 9;
  spit(path, bad);
  CHECK(code_of([&] { read_photon_frame(path); }) == Errc::UnsupportedVersion);

  for (std::size_t cut : {std::size_t{3}, kPhotonHeaderBytes - 1, bytes.size() - 1}) {
    spit(path, bytes.substr(0, cut));
    CHECK(code_of([&] { read_photon_frame(path); }) == Errc::TruncatedFile);
  }

  // Last stamp (value 5) is the final u32 of the file; make it T.
  bad = bytes;
  bad[bad.size() - 4] = 10;
  spit(path, bad);
  CHECK(code_of([&] { read_photon_frame(path); }) == Errc::StampOutOfRange);

  spit(path, bytes + "x");
  CHECK(code_of([&] { read_photon_frame(path); }) == Errc::ParseError);

  CHECK(code_of([&] { read_photon_frame(dir / "missing.phot"); }) == Errc::IoError);
}

TEST_CASE("sketch frame round trips") {
  TempDir dir;
  const auto path = dir / "a.sk";
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto f = random_sketches(rng);
    write_sketch_frame(path, f);
    REQUIRE(fs::file_size(path) == sketch_file_size(f.rows(), f.cols(), f.m()));
    REQUIRE(read_sketch_frame(path) == f);
  }
  CHECK(sketch_file_size(141, 141, 5) == kSketchHeaderBytes + 141u * 141u * 88u);

  const auto f = random_sketches(rng);
  write_sketch_frame(path, f);
  const auto bytes = slurp(path);
  spit(path, bytes.substr(0, bytes.size() - 8));
  CHECK(code_of([&] { read_sketch_frame(path); }) == Errc::TruncatedFile);
  auto bad = bytes;
  bad[3] = 'Q';
  spit(path, bad);
  CHECK(code_of([&] { read_sketch_frame(path); }) == Errc::BadMagic);
  // A photon file is not a sketch file.
  write_photon_frame(path, PhotonFrame(1, 1, 10, {{1}}));
  CHECK(code_of([&] { read_sketch_frame(path); }) == Errc::BadMagic);
}

TEST_CASE("sketch values are validated on read") {
  TempDir dir;
  const auto path = dir / "v.sk";
  const FrequencyScheme scheme(100, 1);
  SketchFrame f(1, 1, scheme);
  const std::vector<std::uint32_t> one{3};
  f.set(0, sketch_from_list(one, scheme));
  write_sketch_frame(path, f);
  auto bytes = slurp(path);
  // Real part of z_1 is the f64 after the u64 count; overwrite with 2.0.
  const double two = 2.0;
  std::memcpy(bytes.data() + kSketchHeaderBytes + 8, &two, 8);
  spit(path, bytes);
  CHECK(code_of([&] { read_sketch_frame(path); }) == Errc::RangeError);
}

TEST_CASE("estimate round trips") {
  TempDir dir;
  const auto path = dir / "e.est";
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto e = random_estimate(rng);
    write_estimate(path, e);
    REQUIRE(read_estimate(path) == e);
  }
  const auto bytes = slurp(path);
  spit(path, bytes.substr(0, bytes.size() - 1));
  CHECK(code_of([&] { read_estimate(path); }) == Errc::TruncatedFile);
}

TEST_CASE("scene round trips") {
  TempDir dir;
  const auto manifest = dir / "scene.txt";
  const auto plane = SceneReference::plane(4, 3, 4613, 2306.5);
  write_scene(manifest, plane);
  const auto back = read_scene(manifest);
  CHECK(back.rows == 4);
  CHECK(back.cols == 3);
  CHECK(back.T == 4613);
  CHECK(back.pixels == plane.pixels);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    SceneReference s = SceneReference::two_layer(3, 5, 1000, 100.0 + u(rng) * 200, 600.0 + u(rng) * 300,
                                                 500.0 + u(rng) * 10, u(rng));
    if (trial % 3 == 0) s.pixels[2].clear();
    if (trial % 4 == 0) s.pixels[7].pop_back();
    if (trial % 2 == 0) {
      s.flux.resize(15);
      for (auto& v : s.flux) v = u(rng) * 2.0;
    }
    write_scene(manifest, s);
    const auto r = read_scene(manifest);
    REQUIRE(r.pixels.size() == s.pixels.size());
    for (std::size_t p = 0; p < s.pixel_count(); ++p) {
      REQUIRE(r.pixels[p].size() == s.pixels[p].size());
      for (std::size_t k = 0; k < s.pixels[p].size(); ++k) {
        CHECK(std::abs(r.pixels[p][k].depth - s.pixels[p][k].depth) < 1e-9);
        CHECK(std::abs(r.pixels[p][k].intensity - s.pixels[p][k].intensity) < 1e-9);
      }
    }
    REQUIRE(r.flux.size() == s.flux.size());
    for (std::size_t p = 0; p < s.flux.size(); ++p) CHECK(std::abs(r.flux[p] - s.flux[p]) < 1e-9);
  }
}

TEST_CASE("scene read errors") {
  TempDir dir;
  const auto manifest = dir / "scene.txt";
  write_scene(manifest, SceneReference::two_layer(2, 3, 200, 50.0, 120.0, 110.0, 0.5));

  fs::remove(dir / "scene_depth1.csv");
  CHECK(code_of([&] { read_scene(manifest); }) == Errc::ManifestError);
  CHECK(code_of([&] { read_scene(dir / "nothing.txt"); }) == Errc::ManifestError);

  write_scene(manifest, SceneReference::two_layer(2, 3, 200, 50.0, 120.0, 110.0, 0.5));
  spit(dir / "scene_depth0.csv", "50,50,50\n50,abc,50\n");
  try {
    read_scene(manifest);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ParseError);
    CHECK(std::string(e.what()).find("row 1 col 1") != std::string::npos);
  }

  spit(dir / "scene_depth0.csv", "50,50,50\n50,50\n");
  CHECK(code_of([&] { read_scene(manifest); }) == Errc::ParseError);

  spit(dir / "scene_depth0.csv", "50,50,50\n50,500,50\n");
  CHECK(code_of([&] { read_scene(manifest); }) == Errc::RangeError);

  spit(manifest, "not a manifest\n");
  CHECK(code_of([&] { read_scene(manifest); }) == Errc::ManifestError);
}

TEST_CASE("PLY output") {
  TempDir dir;
  const auto path = dir / "out.ply";
  const auto vertex_count = [&] {
    std::ifstream in(path);
    std::string line;
    std::size_t declared = 0;
    std::size_t body = 0;
    bool header = true;
    while (std::getline(in, line)) {
      if (header) {
        if (line.rfind("element vertex ", 0) == 0) declared = std::stoul(line.substr(15));
        if (line == "end_header") header = false;
        continue;
      }
      if (!line.empty()) ++body;
    }
    CHECK(declared == body);
    return body;
  };

  write_ply(path, PointCloudEstimate(3, 3, 100), 1.0);
  CHECK(slurp(path).rfind("ply\n", 0) == 0);
  CHECK(vertex_count() == 0);

  PointCloudEstimate one(2, 3, 100);
  one.pixels[one.index(1, 2)] = {{40.0, 0.25}};
  write_ply(path, one, 0.5);
  CHECK(vertex_count() == 1);
  const auto text = slurp(path);
  std::istringstream body(text.substr(text.find("end_header\n") + 11));
  double x, y, z, a;
  body >> x >> y >> z >> a;
  CHECK(x == 2.0);
  CHECK(y == 1.0);
  CHECK(z == 20.0);
  CHECK(a == 0.25);

  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto e = random_estimate(rng);
    write_ply(path, e, 1.0);
    CHECK(vertex_count() == e.total_surfaces());
  }
}

TEST_CASE("response specifications") {
  CHECK(parse_irf("delta").length() == 1);
  const auto g = parse_irf("gauss:2.5");
  CHECK(g.length() == InstrumentResponse::gaussian(2.5).length());
  CHECK(code_of([] { parse_irf("gauss:-1"); }) == Errc::InvalidArgument);
  CHECK(code_of([] { parse_irf("laser"); }) == Errc::InvalidArgument);

  TempDir dir;
  spit(dir / "h.txt", "0.1 0.5, 1.0\n0.4\n");
  const auto f = parse_irf("file:" + (dir / "h.txt").string());
  CHECK(f.length() == 4);
  CHECK(f.center() == 2.0);
  CHECK(code_of([&] { parse_irf("file:" + (dir / "none.txt").string()); }) == Errc::IoError);
  spit(dir / "bad.txt", "0.1 zz\n");
  CHECK(code_of([&] { parse_irf("file:" + (dir / "bad.txt").string()); }) == Errc::ParseError);
}
