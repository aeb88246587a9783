#include "sketchlidar/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "sketchlidar/error.hpp"

namespace sketchlidar {

namespace fs = std::filesystem;

namespace {

constexpr char kPhotonMagic[8] = {'S', 'L', 'P', 'H', 'O', 'T', 'O', 'N'};
constexpr char kSketchMagic[8] = {'S', 'L', 'S', 'K', 'E', 'T', 'C', 'H'};
constexpr char kEstimateMagic[8] = {'S', 'L', 'E', 'S', 'T', 'I', 'M', '\0'};
constexpr std::string_view kSceneTag = "sketchlidar-scene";

// Little-endian byte packing, independent of the host order.
class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const char* data, std::size_t n) { buf_.append(data, n); }

  // Flushes the buffer once it grows large.
  void drain(std::ofstream& out, bool force = false) {
    if (force || buf_.size() >= (1u << 20)) {
      out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
      buf_.clear();
    }
  }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::ifstream& in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  void bytes(char* out, std::size_t n) {
    in_.read(out, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw Error(Errc::TruncatedFile, "unexpected end of file");
    }
  }
  void u32_array(std::uint32_t* out, std::size_t n) {
    std::vector<unsigned char> raw(4 * n);
    bytes(reinterpret_cast<char*>(raw.data()), raw.size());
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = static_cast<std::uint32_t>(raw[4 * i]) | static_cast<std::uint32_t>(raw[4 * i + 1]) << 8 |
               static_cast<std::uint32_t>(raw[4 * i + 2]) << 16 |
               static_cast<std::uint32_t>(raw[4 * i + 3]) << 24;
    }
  }
  void expect_end() {
    if (in_.peek() != std::ifstream::traits_type::eof()) {
      throw Error(Errc::ParseError, "trailing bytes after the last pixel");
    }
  }

 private:
  std::uint64_t get(int n) {
    unsigned char raw[8];
    bytes(reinterpret_cast<char*>(raw), static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(raw[i]) << (8 * i);
    return v;
  }
  std::ifstream& in_;
};

std::ofstream open_out(const fs::path& path, bool binary = true) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_in(const fs::path& path, bool binary = true) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error(Errc::IoError, "cannot open '" + path.string() + "'");
  return in;
}

void finish_write(std::ofstream& out, Writer& w, const fs::path& path) {
  w.drain(out, true);
  out.flush();
  if (!out) throw Error(Errc::IoError, "write failed for '" + path.string() + "'");
}

std::uint32_t narrow32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(Errc::RangeError, std::string(what) + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

struct Header {
  std::size_t rows;
  std::size_t cols;
  std::size_t T;
};

void write_header(Writer& w, const char (&magic)[8], const Header& h) {
  w.bytes(magic, 8);
  w.u16(kFormatVersion);
  w.u32(narrow32(h.rows, "rows"));
  w.u32(narrow32(h.cols, "cols"));
  w.u32(narrow32(h.T, "T"));
}

Header read_header(Reader& r, const char (&magic)[8]) {
  char got[8];
  r.bytes(got, 8);
  if (std::memcmp(got, magic, 8) != 0) throw Error(Errc::BadMagic, "unrecognised file magic");
  const auto version = r.u16();
  if (version != kFormatVersion) {
    throw Error(Errc::UnsupportedVersion, "unsupported format version " + std::to_string(version));
  }
  Header h{r.u32(), r.u32(), r.u32()};
  if (h.rows == 0 || h.cols == 0) throw Error(Errc::RangeError, "dimensions must be >= 1");
  if (h.T < 2) throw Error(Errc::RangeError, "T must be >= 2");
  return h;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view text, const std::string& where) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (text == "nan" || text == "NaN") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw Error(Errc::ParseError, where + ": cannot parse '" + std::string(text) + "'");
  }
  return v;
}

void write_grid(const fs::path& path, std::size_t rows, std::size_t cols,
                const std::function<double(std::size_t)>& value) {
  auto out = open_out(path, false);
  std::string line;
  for (std::size_t r = 0; r < rows; ++r) {
    line.clear();
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) line += ',';
      line += format_double(value(r * cols + c));
    }
    line += '\n';
    out << line;
  }
  if (!out) throw Error(Errc::IoError, "write failed for '" + path.string() + "'");
}

std::vector<double> read_grid(const fs::path& path, std::size_t rows, std::size_t cols) {
  if (!fs::exists(path)) {
    throw Error(Errc::ManifestError, "grid file '" + path.string() + "' is missing");
  }
  auto in = open_in(path, false);
  std::vector<double> values;
  values.reserve(rows * cols);
  std::string line;
  std::size_t r = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    if (r >= rows) {
      throw Error(Errc::ParseError, path.string() + ": more than " + std::to_string(rows) + " rows");
    }
    std::size_t c = 0;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      const auto field = std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      const std::string where =
          path.filename().string() + " row " + std::to_string(r) + " col " + std::to_string(c);
      if (c >= cols) throw Error(Errc::ParseError, where + ": too many columns");
      values.push_back(parse_double(field, where));
      ++c;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (c != cols) {
      throw Error(Errc::ParseError, path.filename().string() + " row " + std::to_string(r) +
                                        ": expected " + std::to_string(cols) + " columns");
    }
    ++r;
  }
  if (r != rows) {
    throw Error(Errc::ParseError, path.filename().string() + ": expected " + std::to_string(rows) + " rows");
  }
  return values;
}

}  // namespace

void write_photon_frame(const fs::path& path, const PhotonFrame& frame) {
  if (!frame.complete()) throw Error(Errc::InvalidArgument, "photon frame is incomplete");
  auto out = open_out(path);
  Writer w;
  write_header(w, kPhotonMagic, {frame.rows(), frame.cols(), frame.T()});
  for (std::size_t p = 0; p < frame.pixel_count(); ++p) {
    const auto stamps = frame.stamps(p);
    w.u32(narrow32(stamps.size(), "photon count"));
    for (auto s : stamps) w.u32(s);
    w.drain(out);
  }
  finish_write(out, w, path);
}

PhotonFrameReader::PhotonFrameReader(const fs::path& path) : in_(open_in(path)) {
  Reader r(in_);
  const auto h = read_header(r, kPhotonMagic);
  rows_ = h.rows;
  cols_ = h.cols;
  T_ = h.T;
}

bool PhotonFrameReader::next(std::vector<std::uint32_t>& stamps) {
  if (next_pixel_ == rows_ * cols_) return false;
  Reader r(in_);
  const auto n = r.u32();
  // Guard against absurd counts before allocating.
  const auto pos = in_.tellg();
  in_.seekg(0, std::ios::end);
  const auto end = in_.tellg();
  in_.seekg(pos);
  if (pos < 0 || end < 0 || static_cast<std::uint64_t>(end - pos) < 4ull * n) {
    throw Error(Errc::TruncatedFile, "pixel " + std::to_string(next_pixel_) + " is truncated");
  }
  stamps.resize(n);
  r.u32_array(stamps.data(), n);
  for (auto s : stamps) {
    if (s >= T_) {
      throw Error(Errc::StampOutOfRange, "stamp " + std::to_string(s) + " at pixel " +
                                             std::to_string(next_pixel_) + " is not below T");
    }
  }
  ++next_pixel_;
  return true;
}

void PhotonFrameReader::finish() {
  if (next_pixel_ != rows_ * cols_) throw Error(Errc::TruncatedFile, "not every pixel was read");
  Reader(in_).expect_end();
}

PhotonFrame read_photon_frame(const fs::path& path) {
  PhotonFrameReader reader(path);
  PhotonFrame frame(reader.rows(), reader.cols(), reader.T());
  std::vector<std::uint32_t> stamps;
  while (reader.next(stamps)) frame.push_pixel(stamps);
  reader.finish();
  return frame;
}

void write_sketch_frame(const fs::path& path, const SketchFrame& frame) {
  auto out = open_out(path);
  Writer w;
  write_header(w, kSketchMagic, {frame.rows(), frame.cols(), frame.scheme().T()});
  if (frame.m() > std::numeric_limits<std::uint16_t>::max()) {
    throw Error(Errc::RangeError, "m does not fit in 16 bits");
  }
  w.u16(static_cast<std::uint16_t>(frame.m()));
  for (std::size_t p = 0; p < frame.pixel_count(); ++p) {
    const auto z = frame.view(p);
    w.u64(z.count);
    for (const auto& v : z.values) {
      w.f64(v.real());
      w.f64(v.imag());
    }
    w.drain(out);
  }
  finish_write(out, w, path);
}

SketchFrame read_sketch_frame(const fs::path& path) {
  auto in = open_in(path);
  Reader r(in);
  const auto h = read_header(r, kSketchMagic);
  const std::size_t m = r.u16();
  if (m == 0 || m >= h.T) throw Error(Errc::RangeError, "sketch size must lie in [1, T-1]");
  const auto expected = sketch_file_size(h.rows, h.cols, m);
  const auto actual = fs::file_size(path);
  if (actual < expected) throw Error(Errc::TruncatedFile, "sketch file is shorter than its header implies");
  if (actual > expected) throw Error(Errc::ParseError, "trailing bytes after the last pixel");

  SketchFrame frame(h.rows, h.cols, FrequencyScheme(h.T, m));
  for (std::size_t p = 0; p < frame.pixel_count(); ++p) {
    const auto n = r.u64();
    auto values = frame.mutable_values(p);
    for (std::size_t l = 0; l < m; ++l) {
      const double re = r.f64();
      const double im = r.f64();
      if (!std::isfinite(re) || !std::isfinite(im) || std::hypot(re, im) > 1.0 + 1e-9 ||
          (n == 0 && (re != 0.0 || im != 0.0))) {
        throw Error(Errc::RangeError, "invalid sketch value at pixel " + std::to_string(p));
      }
      values[l] = {re, im};
    }
    frame.set_count(p, n);
  }
  return frame;
}

void write_estimate(const fs::path& path, const PointCloudEstimate& est) {
  validate(est);
  auto out = open_out(path);
  Writer w;
  write_header(w, kEstimateMagic, {est.rows, est.cols, est.T});
  for (std::size_t p = 0; p < est.pixel_count(); ++p) {
    const auto& surfaces = est.pixels[p];
    if (surfaces.size() > 255) throw Error(Errc::RangeError, "more than 255 surfaces in a pixel");
    w.u64(est.counts[p]);
    w.u8(static_cast<std::uint8_t>(surfaces.size()));
    for (const auto& s : surfaces) {
      w.f64(s.depth);
      w.f64(s.intensity);
    }
    w.drain(out);
  }
  finish_write(out, w, path);
}

PointCloudEstimate read_estimate(const fs::path& path) {
  auto in = open_in(path);
  Reader r(in);
  const auto h = read_header(r, kEstimateMagic);
  if (h.rows * h.cols > fs::file_size(path)) {
    throw Error(Errc::TruncatedFile, "estimate file is shorter than its header implies");
  }
  PointCloudEstimate est(h.rows, h.cols, h.T);
  for (std::size_t p = 0; p < est.pixel_count(); ++p) {
    est.counts[p] = r.u64();
    const std::size_t K = r.u8();
    est.pixels[p].resize(K);
    for (auto& s : est.pixels[p]) {
      s.depth = r.f64();
      s.intensity = r.f64();
    }
  }
  r.expect_end();
  validate(est);
  return est;
}

void write_scene(const fs::path& manifest, const SceneReference& scene) {
  validate(scene);
  const std::string stem = manifest.stem().string();
  const fs::path dir = manifest.parent_path();
  const std::size_t K = scene.max_surfaces();

  auto out = open_out(manifest, false);
  out << kSceneTag << ' ' << kFormatVersion << '\n'
      << "rows " << scene.rows << '\n'
      << "cols " << scene.cols << '\n'
      << "T " << scene.T << '\n'
      << "layers " << K << '\n';
  for (std::size_t k = 0; k < K; ++k) {
    const std::string depth_name = stem + "_depth" + std::to_string(k) + ".csv";
    const std::string intensity_name = stem + "_intensity" + std::to_string(k) + ".csv";
    out << "depth " << k << ' ' << depth_name << '\n' << "intensity " << k << ' ' << intensity_name << '\n';
    const auto layer = [&](bool depth) {
      return [&, depth](std::size_t p) {
        const auto& s = scene.pixels[p];
        if (k >= s.size()) return std::numeric_limits<double>::quiet_NaN();
        return depth ? s[k].depth : s[k].intensity;
      };
    };
    write_grid(dir / depth_name, scene.rows, scene.cols, layer(true));
    write_grid(dir / intensity_name, scene.rows, scene.cols, layer(false));
  }
  if (!scene.flux.empty()) {
    const std::string flux_name = stem + "_flux.csv";
    out << "flux " << flux_name << '\n';
    write_grid(dir / flux_name, scene.rows, scene.cols, [&](std::size_t p) { return scene.flux[p]; });
  }
  out.flush();
  if (!out) throw Error(Errc::IoError, "write failed for '" + manifest.string() + "'");
}

SceneReference read_scene(const fs::path& manifest) {
  if (!fs::exists(manifest)) {
    throw Error(Errc::ManifestError, "manifest '" + manifest.string() + "' does not exist");
  }
  auto in = open_in(manifest, false);
  const fs::path dir = manifest.parent_path();

  std::string line;
  if (!std::getline(in, line) || line.rfind(kSceneTag, 0) != 0) {
    throw Error(Errc::ManifestError, "not a scene manifest");
  }
  if (line != std::string(kSceneTag) + ' ' + std::to_string(kFormatVersion)) {
    throw Error(Errc::UnsupportedVersion, "unsupported scene manifest version");
  }
  std::map<std::string, std::size_t> dims;
  std::map<std::size_t, std::string> depth_files;
  std::map<std::size_t, std::string> intensity_files;
  std::string flux_file;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    const auto bad = [&] {
      return Error(Errc::ManifestError, "manifest line " + std::to_string(line_no) + ": '" + line + "'");
    };
    if (key == "rows" || key == "cols" || key == "T" || key == "layers") {
      std::size_t v = 0;
      if (!(fields >> v)) throw bad();
      dims[key] = v;
    } else if (key == "depth" || key == "intensity") {
      std::size_t k = 0;
      std::string name;
      if (!(fields >> k >> name)) throw bad();
      (key == "depth" ? depth_files : intensity_files)[k] = name;
    } else if (key == "flux") {
      if (!(fields >> flux_file)) throw bad();
    } else {
      throw bad();
    }
  }
  for (const char* key : {"rows", "cols", "T", "layers"}) {
    if (!dims.count(key)) throw Error(Errc::ManifestError, std::string("manifest lacks '") + key + "'");
  }
  SceneReference scene;
  scene.rows = dims["rows"];
  scene.cols = dims["cols"];
  scene.T = dims["T"];
  if (scene.rows == 0 || scene.cols == 0) throw Error(Errc::RangeError, "scene dimensions must be >= 1");
  scene.pixels.resize(scene.pixel_count());
  const std::size_t K = dims["layers"];
  for (std::size_t k = 0; k < K; ++k) {
    if (!depth_files.count(k) || !intensity_files.count(k)) {
      throw Error(Errc::ManifestError, "manifest lacks layer " + std::to_string(k));
    }
    const auto depth = read_grid(dir / depth_files[k], scene.rows, scene.cols);
    const auto intensity = read_grid(dir / intensity_files[k], scene.rows, scene.cols);
    for (std::size_t p = 0; p < scene.pixel_count(); ++p) {
      const bool has_depth = !std::isnan(depth[p]);
      if (has_depth != !std::isnan(intensity[p])) {
        throw Error(Errc::ParseError, "layer " + std::to_string(k) + " row " + std::to_string(p / scene.cols) +
                                          " col " + std::to_string(p % scene.cols) +
                                          ": depth and intensity disagree on presence");
      }
      if (has_depth) scene.pixels[p].push_back({depth[p], intensity[p]});
    }
  }
  if (!flux_file.empty()) scene.flux = read_grid(dir / flux_file, scene.rows, scene.cols);
  validate(scene);
  return scene;
}

void write_ply(const fs::path& path, const PointCloudEstimate& est, double scale) {
  validate(est);
  auto out = open_out(path, false);
  out << "ply\nformat ascii 1.0\n"
      << "element vertex " << est.total_surfaces() << '\n'
      << "property double x\nproperty double y\nproperty double z\nproperty double intensity\n"
      << "end_header\n";
  char buf[128];
  for (std::size_t r = 0; r < est.rows; ++r) {
    for (std::size_t c = 0; c < est.cols; ++c) {
      for (const auto& s : est.pixels[est.index(r, c)]) {
        std::snprintf(buf, sizeof buf, "%zu %zu %.17g %.17g\n", c, r, s.depth * scale, s.intensity);
        out << buf;
      }
    }
  }
  out.flush();
  if (!out) throw Error(Errc::IoError, "write failed for '" + path.string() + "'");
}

InstrumentResponse parse_irf(std::string_view spec) {
  if (spec == "delta") return InstrumentResponse::delta();
  if (spec.rfind("gauss:", 0) == 0) {
    const double sigma = parse_double(spec.substr(6), "irf");
    if (!(sigma > 0.0)) throw Error(Errc::InvalidArgument, "gaussian sigma must be positive");
    return InstrumentResponse::gaussian(sigma);
  }
  if (spec.rfind("file:", 0) == 0) {
    const fs::path path{std::string(spec.substr(5))};
    auto in = open_in(path, false);
    std::vector<double> samples;
    std::string token;
    std::size_t index = 0;
    while (in >> token) {
      std::size_t start = 0;
      while (start <= token.size()) {
        const auto comma = token.find(',', start);
        const auto piece = std::string_view(token).substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!piece.empty()) samples.push_back(parse_double(piece, path.filename().string() + " sample " + std::to_string(index++)));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    }
    return InstrumentResponse::from_samples(std::move(samples));
  }
  throw Error(Errc::InvalidArgument, "irf must be delta, gauss:<sigma> or file:<path>");
}

}  // namespace sketchlidar
