// Command-line front end: scene generation, simulation, sketching, the three
// estimators, evaluation and the timing harness.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sketchlidar/bench.hpp"
#include "sketchlidar/error.hpp"
#include "sketchlidar/io.hpp"
#include "sketchlidar/metrics.hpp"
#include "sketchlidar/pixelwise.hpp"
#include "sketchlidar/regularized.hpp"
#include "sketchlidar/simulator.hpp"
#include "sketchlidar/sketch.hpp"

namespace fs = std::filesystem;
using namespace sketchlidar;

namespace {

constexpr int kUsageError = 2;

// Accepts positive reals including "inf".
std::string positive_or_inf(const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && v > 0.0) return {};
  } catch (const std::exception&) {
  }
  return "value must be positive (or inf)";
}

void print_estimate_summary(const PointCloudEstimate& est, const char* label) {
  std::size_t lit = 0;
  for (const auto& p : est.pixels) lit += p.empty() ? 0 : 1;
  std::printf("%s: %zu surfaces in %zu of %zu pixels\n", label, est.total_surfaces(), lit,
              est.pixel_count());
}

void save_estimate(const PointCloudEstimate& est, const std::string& out, const std::string& ply,
                   double scale) {
  write_estimate(out, est);
  if (!ply.empty()) write_ply(ply, est, scale);
}

struct SceneArgs {
  std::string kind = "plane";
  std::size_t rows = 32;
  std::size_t cols = 32;
  std::size_t T = 4613;
  double depth = 2306.0;
  double depth2 = 3000.0;
  double depth3 = 3500.0;
  double front_share = 0.5;
  std::string out;
};

int cmd_scene(const SceneArgs& a) {
  SceneReference scene;
  if (a.kind == "plane") {
    scene = SceneReference::plane(a.rows, a.cols, a.T, a.depth);
  } else if (a.kind == "step") {
    scene = SceneReference::step_edge(a.rows, a.cols, a.T, a.depth, a.depth2);
  } else {
    scene = SceneReference::two_layer(a.rows, a.cols, a.T, a.depth, a.depth2, a.depth3, a.front_share);
  }
  write_scene(a.out, scene);
  std::printf("scene: %zu x %zu, T=%zu, %zu surfaces\n", scene.rows, scene.cols, scene.T,
              scene.total_surfaces());
  return 0;
}

struct SimulateArgs {
  std::string scene;
  std::string out;
  double photons = 100.0;
  std::string sbr = "10";
  std::uint64_t seed = 0;
  std::string irf = "gauss:10";
};

int cmd_simulate(const SimulateArgs& a) {
  const auto scene = read_scene(a.scene);
  const AcquisitionConfig cfg{a.photons, std::stod(a.sbr), parse_irf(a.irf), a.seed};
  const auto frame = simulate_frame(scene, cfg);
  write_photon_frame(a.out, frame);
  std::printf("photons: %llu\n", static_cast<unsigned long long>(frame.total_photons()));
  return 0;
}

struct SketchArgs {
  std::string in;
  std::string out;
  std::size_t m = 10;
};

// Streams the photon file pixel by pixel; only one pixel's stamps are held.
int cmd_sketch(const SketchArgs& a) {
  PhotonFrameReader reader(a.in);
  const FrequencyScheme scheme(reader.T(), a.m);
  const SketchAccumulator acc(scheme);
  SketchFrame frame(reader.rows(), reader.cols(), scheme);
  std::vector<std::uint32_t> stamps;
  std::size_t p = 0;
  std::uint64_t total = 0;
  while (reader.next(stamps)) {
    auto values = frame.mutable_values(p);
    std::uint64_t count = 0;
    for (auto s : stamps) acc.add(values, count, s);
    frame.set_count(p, count);
    total += count;
    ++p;
  }
  reader.finish();
  write_sketch_frame(a.out, frame);
  const double in_bytes = static_cast<double>(fs::file_size(a.in));
  const double out_bytes = static_cast<double>(fs::file_size(a.out));
  std::printf("photons: %llu\nsketch bytes: %.0f\ncompression ratio: %.4f\n",
              static_cast<unsigned long long>(total), out_bytes, in_bytes / out_bytes);
  return 0;
}

struct SolveArgs {
  std::string in;
  std::string out;
  std::string ply;
  double scale = 1.0;
  std::string irf = "gauss:10";
  std::size_t surfaces = 1;
  // reconstruct only
  std::string denoiser = "median";
  std::size_t radius = 2;
  std::size_t iters = 10;
  double step_size = 0.01;
  std::size_t init_radius = 3;
};

int cmd_fit(const SolveArgs& a) {
  const auto frame = read_sketch_frame(a.in);
  const SketchModel model(frame.scheme(), parse_irf(a.irf));
  FitOptions opts;
  opts.max_surfaces = a.surfaces;
  const auto est = fit_frame(frame, model, opts);
  if (est.total_surfaces() == 0) throw Error(Errc::NoSurfaceFound, "no pixel yielded a surface");
  save_estimate(est, a.out, a.ply, a.scale);
  print_estimate_summary(est, "fit");
  return 0;
}

int cmd_reconstruct(const SolveArgs& a) {
  const auto frame = read_sketch_frame(a.in);
  const SketchModel model(frame.scheme(), parse_irf(a.irf));
  Srt3dOptions opts;
  opts.fit.max_surfaces = a.surfaces;
  opts.denoiser = parse_denoiser(a.denoiser);
  opts.radius = a.radius;
  opts.outer_iterations = a.iters;
  opts.step_size = a.step_size;
  opts.init_radius = a.init_radius;
  const auto est = reconstruct(frame, model, opts);
  save_estimate(est, a.out, a.ply, a.scale);
  print_estimate_summary(est, "reconstruct");
  return 0;
}

int cmd_xcorr(const SolveArgs& a) {
  const auto frame = read_photon_frame(a.in);
  const auto est = xcorr_frame(frame, parse_irf(a.irf));
  save_estimate(est, a.out, a.ply, a.scale);
  print_estimate_summary(est, "xcorr");
  return 0;
}

struct EvalArgs {
  std::string estimate;
  std::string scene;
  double tau = 4.0;
  std::string sbr = "inf";
  std::string out;
  std::string matches;
};

int cmd_eval(const EvalArgs& a) {
  const auto est = read_estimate(a.estimate);
  const auto scene = read_scene(a.scene);
  const double sbr = std::stod(a.sbr);
  const double scale = std::isinf(sbr) ? 1.0 : sbr / (1.0 + sbr);
  const auto report = evaluate(est, scene, a.tau, scale);
  write_report_text(std::cout, report);
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    write_report_csv(out, report);
    if (!out) throw Error(Errc::IoError, "write failed for '" + a.out + "'");
  }
  if (!a.matches.empty()) {
    std::ofstream out(a.matches);
    write_match_table_csv(out, report);
    if (!out) throw Error(Errc::IoError, "write failed for '" + a.matches + "'");
  }
  return 0;
}

struct BenchArgs {
  std::string sweep = "photons";
  std::vector<std::size_t> m{5, 10};
  std::vector<double> photons{10, 50, 100, 500, 1000};
  std::vector<std::size_t> sides{141, 282};
  std::size_t reps = 5;
  std::uint64_t seed = 1;
  std::string out = "bench.csv";
  std::string summary;
};

int cmd_bench(const BenchArgs& a) {
  BenchConfig cfg;
  cfg.sketch_sizes = a.m;
  cfg.repetitions = a.reps;
  cfg.seed = a.seed;
  cfg.photons = a.photons;
  cfg.sides = a.sides;
  if (a.sweep == "photons") cfg.sides = {a.sides.front()};
  if (a.sweep == "dims") cfg.photons = {a.photons.front()};
  const auto records = run_bench(cfg);
  std::ofstream out(a.out);
  write_bench_csv(out, records);
  if (!out) throw Error(Errc::IoError, "write failed for '" + a.out + "'");
  if (!a.summary.empty()) {
    std::ofstream sum(a.summary);
    write_bench_summary(sum, records);
  }
  write_bench_summary(std::cout, records);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketched single-photon lidar reconstruction"};
  app.require_subcommand(1);

  SceneArgs scene;
  auto* sc = app.add_subcommand("scene", "Write a synthetic scene manifest");
  sc->add_option("--kind", scene.kind, "plane | step | two-layer")
      ->check(CLI::IsMember({"plane", "step", "two-layer"}));
  sc->add_option("--rows", scene.rows)->check(CLI::PositiveNumber);
  sc->add_option("--cols", scene.cols)->check(CLI::PositiveNumber);
  sc->add_option("--T", scene.T)->check(CLI::Range(2, std::numeric_limits<int>::max()));
  sc->add_option("--depth", scene.depth, "Plane depth, left half, or front layer");
  sc->add_option("--depth2", scene.depth2, "Right half or back layer");
  sc->add_option("--depth3", scene.depth3, "Back layer inside the central third");
  sc->add_option("--front-share", scene.front_share)->check(CLI::Range(0.0, 1.0));
  sc->add_option("--out", scene.out, "Manifest path")->required();

  SimulateArgs sim;
  auto* si = app.add_subcommand("simulate", "Simulate a photon frame from a scene");
  si->add_option("--scene", sim.scene)->required()->check(CLI::ExistingFile);
  si->add_option("--out", sim.out)->required();
  si->add_option("--photons", sim.photons, "Mean photons per pixel")->check(CLI::PositiveNumber);
  si->add_option("--sbr", sim.sbr, "Signal-to-background ratio (inf allowed)")->check(positive_or_inf);
  si->add_option("--seed", sim.seed);
  si->add_option("--irf", sim.irf, "delta | gauss:<sigma> | file:<path>");

  SketchArgs sk;
  auto* ss = app.add_subcommand("sketch", "Sketch a photon frame");
  ss->add_option("--in", sk.in)->required()->check(CLI::ExistingFile);
  ss->add_option("--out", sk.out)->required();
  ss->add_option("--sketch-size", sk.m)->check(CLI::Range(1, 65535));

  SolveArgs fit;
  auto* sf = app.add_subcommand("fit", "Pixelwise sketched estimation");
  SolveArgs rec;
  auto* sr = app.add_subcommand("reconstruct", "Spatially regularized reconstruction");
  SolveArgs xc;
  auto* sx = app.add_subcommand("xcorr", "Cross-correlation baseline on a photon frame");
  for (auto [cmd, args] : {std::pair{sf, &fit}, std::pair{sr, &rec}, std::pair{sx, &xc}}) {
    cmd->add_option("--in", args->in)->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", args->out, "Estimate file")->required();
    cmd->add_option("--ply", args->ply, "Also write a PLY point cloud");
    cmd->add_option("--scale", args->scale, "Depth-to-z scale for the PLY");
    cmd->add_option("--irf", args->irf, "delta | gauss:<sigma> | file:<path>");
  }
  for (auto [cmd, args] : {std::pair{sf, &fit}, std::pair{sr, &rec}}) {
    cmd->add_option("--surfaces", args->surfaces, "Maximum surfaces per pixel")->check(CLI::Range(1, 255));
  }
  sr->add_option("--denoiser", rec.denoiser)->check(CLI::IsMember({"median", "bilateral", "none"}));
  sr->add_option("--radius", rec.radius);
  sr->add_option("--iters", rec.iters);
  sr->add_option("--step-size", rec.step_size)->check(CLI::NonNegativeNumber);
  sr->add_option("--init-radius", rec.init_radius);

  EvalArgs ev;
  auto* se = app.add_subcommand("eval", "Score an estimate against a scene");
  se->add_option("--estimate", ev.estimate)->required()->check(CLI::ExistingFile);
  se->add_option("--scene", ev.scene)->required()->check(CLI::ExistingFile);
  se->add_option("--tau", ev.tau, "Detection threshold in bins")->check(CLI::PositiveNumber);
  se->add_option("--sbr", ev.sbr, "SBR of the data; scales ground-truth intensities")->check(positive_or_inf);
  se->add_option("--out", ev.out, "Summary CSV");
  se->add_option("--matches", ev.matches, "Per-pixel match table CSV");

  BenchArgs bn;
  auto* sb = app.add_subcommand("bench", "Time sketching and inference");
  sb->add_option("--bench-sweep", bn.sweep)->check(CLI::IsMember({"photons", "dims", "both"}));
  sb->add_option("--sketch-size", bn.m)->check(CLI::Range(1, 65535));
  sb->add_option("--photons", bn.photons)->check(CLI::PositiveNumber);
  sb->add_option("--sides", bn.sides)->check(CLI::PositiveNumber);
  sb->add_option("--reps", bn.reps)->check(CLI::PositiveNumber);
  sb->add_option("--seed", bn.seed);
  sb->add_option("--out", bn.out, "Record table CSV");
  sb->add_option("--summary", bn.summary, "Summary CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*sc) return cmd_scene(scene);
    if (*si) return cmd_simulate(sim);
    if (*ss) return cmd_sketch(sk);
    if (*sf) return cmd_fit(fit);
    if (*sr) return cmd_reconstruct(rec);
    if (*sx) return cmd_xcorr(xc);
    if (*se) return cmd_eval(ev);
    if (*sb) return cmd_bench(bn);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kUsageError;
}
