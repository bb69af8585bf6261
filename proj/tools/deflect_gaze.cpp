// deflect-gaze: simulate, decode, reconstruct, estimate gaze and benchmark.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "deflect_gaze/bench.hpp"
#include "deflect_gaze/decode.hpp"
#include "deflect_gaze/gaze_normals.hpp"
#include "deflect_gaze/image.hpp"
#include "deflect_gaze/optimize.hpp"
#include "deflect_gaze/render.hpp"
#include "deflect_gaze/scene.hpp"
#include "deflect_gaze/stereo.hpp"

namespace fs = std::filesystem;
using namespace deflect_gaze;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAborted = 3;

// {cam}_{kind}_{shift}.{ext}
std::string artifact(const std::string& dir, std::size_t cam, const std::string& kind, int shift,
                     const std::string& ext) {
  return (fs::path(dir) / ("cam" + std::to_string(cam) + "_" + kind + "_" + std::to_string(shift) + "." + ext))
      .string();
}

SceneConfig scene_or_default(const std::string& path) { return path.empty() ? default_scene() : load_scene(path); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
}

CorrespondenceMap read_corr(const std::string& dir, std::size_t cam) {
  return read_correspondence(artifact(dir, cam, "corr", 0, "pfm"), artifact(dir, cam, "mask", 0, "pgm"));
}

Pixel best_quality_pixel(const PhaseMap& map) {
  Pixel best{-1, -1};
  double q = -1.0;
  for (int y = 0; y < map.height(); ++y)
    for (int x = 0; x < map.width(); ++x)
      if (map.is_valid(x, y) && map.quality(x, y) > q) {
        q = map.quality(x, y);
        best = {x, y};
      }
  if (best.x < 0) throw Error(ErrorCode::EmptyMap, "phase map has no valid pixels");
  return best;
}

struct SimulateOpts {
  std::string scene, out, pattern = "crossed";
  double azimuth = 0.0, elevation = 0.0;
  double period_x = 16.0, period_y = 22.0, period = 32.0;
  int shifts = 4;
  double sigma_i = 0.0, sigma_c = 0.0;
  std::uint64_t seed = 1;
};

int run_simulate(const SimulateOpts& o) {
  SceneConfig scene = scene_or_default(o.scene);
  scene.eye = rotate_eye(scene.eye, o.azimuth, o.elevation);
  fs::create_directories(o.out);
  save_scene(scene, (fs::path(o.out) / "scene.json").string());
  for (std::size_t c = 0; c < scene.cameras.size(); ++c) {
    const RenderTruth truth = render_truth(scene, c);
    const CorrespondenceMap corr = add_correspondence_noise(truth.map, o.sigma_c, pixel_rng(o.seed, 0xc0, c)());
    write_correspondence(artifact(o.out, c, "corr", 0, "pfm"), artifact(o.out, c, "mask", 0, "pgm"), corr);
    const std::uint64_t frame_seed = pixel_rng(o.seed, 0xf0, c)();
    if (o.pattern == "crossed") {
      const CrossedFringe cf{o.period_x, o.period_y, 0.25, 0.25, 0.5};
      write_pgm16(artifact(o.out, c, "frame", 0, "pgm"), render_frame(truth.map, cf, 0, {o.sigma_i, frame_seed}));
    } else if (o.pattern == "phaseshift") {
      for (Axis axis : {Axis::X, Axis::Y}) {
        const PhaseShiftSet ps{o.period, o.shifts, axis};
        const std::string kind = axis == Axis::X ? "framex" : "framey";
        for (int k = 0; k < o.shifts; ++k) {
          write_pgm16(artifact(o.out, c, kind, k, "pgm"),
                      render_frame(truth.map, ps, k, {o.sigma_i, frame_seed + (axis == Axis::X ? 0u : 1u)}));
        }
      }
    } else if (o.pattern != "none") {
      throw Error(ErrorCode::InvalidArgument, "unknown pattern '" + o.pattern + "' (crossed|phaseshift|none)");
    }
  }
  std::cout << "wrote " << scene.cameras.size() << " camera(s) to " << o.out << "\n";
  return 0;
}

struct DecodeOpts {
  std::string mode = "cwt", in, out;
  int cam = 0;
  double period_x = 16.0, period_y = 22.0, period = 32.0;
  int shifts = 4;
  std::vector<double> anchor;  // x y u0 v0
};

int run_decode(const DecodeOpts& o) {
  fs::create_directories(o.out);
  const auto c = static_cast<std::size_t>(o.cam);
  PhaseMap wx, wy;
  double px = o.period_x, py = o.period_y;
  if (o.mode == "cwt") {
    const Frame frame = read_pgm(artifact(o.in, c, "frame", 0, "pgm"));
    wx = cwt2_phase(frame, WaveletParams::for_periods(0.75 * px, 1.33 * px, Axis::X));
    wy = cwt2_phase(frame, WaveletParams::for_periods(0.75 * py, 1.33 * py, Axis::Y));
  } else if (o.mode == "phaseshift") {
    px = py = o.period;
    for (Axis axis : {Axis::X, Axis::Y}) {
      std::vector<Frame> frames;
      for (int k = 0; k < o.shifts; ++k) {
        frames.push_back(read_pgm(artifact(o.in, c, axis == Axis::X ? "framex" : "framey", k, "pgm")));
      }
      (axis == Axis::X ? wx : wy) = phase_shift_decode(frames, PhaseShiftSet{o.period, o.shifts, axis});
    }
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown mode '" + o.mode + "' (cwt|phaseshift)");
  }
  const PhaseMap ux = unwrap2(wx, best_quality_pixel(wx));
  const PhaseMap uy = unwrap2(wy, best_quality_pixel(wy));
  write_phase_map(artifact(o.out, c, "phasex", 0, "pfm"), artifact(o.out, c, "phasexmask", 0, "pgm"), ux);
  write_phase_map(artifact(o.out, c, "phasey", 0, "pfm"), artifact(o.out, c, "phaseymask", 0, "pgm"), uy);
  std::cout << "decoded " << ux.valid_count() << " x-phase and " << uy.valid_count() << " y-phase pixels\n";
  if (!o.anchor.empty()) {
    if (o.anchor.size() != 4) throw Error(ErrorCode::InvalidArgument, "--anchor takes x y u0 v0");
    const Anchor a{Pixel{static_cast<int>(o.anchor[0]), static_cast<int>(o.anchor[1])}, o.anchor[2], o.anchor[3]};
    const CrossedFringe periods{px, py, 0.25, 0.25, 0.5};
    const CorrespondenceMap corr = phase_to_correspondence(ux, uy, periods, a);
    write_correspondence(artifact(o.out, c, "corr", 0, "pfm"), artifact(o.out, c, "mask", 0, "pgm"), corr);
    std::cout << "wrote correspondences for " << corr.valid_count() << " pixels\n";
  }
  return 0;
}

int run_reconstruct(const std::string& scene_path, const std::string& in, const std::string& out, int stride) {
  const SceneConfig scene = scene_or_default(scene_path);
  const NormalField field = reconstruct_field(scene, read_corr(in, 0), read_corr(in, 1), default_sweep(scene), stride);
  write_normal_field(out, field);
  std::cout << "wrote " << field.samples.size() << " normal samples to " << out << "\n";
  return 0;
}

int run_gaze_normals(const std::string& in, const std::string& method, std::uint64_t seed, const std::string& out) {
  const auto lines = backtrace_lines(read_normal_field(in));
  GazeEstimate g;
  if (method == "two-center") {
    ClusterParams params;
    params.rng_seed = seed;
    g = gaze_two_center(lines, params);
  } else if (method == "axis-fit") {
    g = gaze_axis_fit(lines);
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown method '" + method + "' (two-center|axis-fit)");
  }
  std::cout << gaze_pretty(g);
  if (!out.empty()) write_text(out, std::string(kGazeCsvHeader) + "\n" + gaze_csv_row(g) + "\n");
  return 0;
}

int run_gaze_optimize(const std::string& scene_path, const std::string& measured, const std::string& freeze,
                      int max_iters, const std::string& trace, const std::string& out) {
  const SceneConfig scene = scene_or_default(scene_path);
  std::vector<CorrespondenceMap> maps;
  for (std::size_t c = 0; c < scene.cameras.size(); ++c) maps.push_back(read_corr(measured, c));
  EyeParamVector init = init_guess(maps, scene);
  if (freeze == "none") {
    for (int i = static_cast<int>(EyeParam::CorneaRadius); i < kNumEyeParams; ++i) init.active[i] = true;
  } else if (freeze != "shape") {
    throw Error(ErrorCode::InvalidArgument, "--freeze takes shape|none");
  }
  OptConfig config;
  config.max_iters = max_iters;
  const OptimizeResult r = optimize_gaze(init, maps, scene, config);
  if (!trace.empty()) write_trace(trace, r.trace);
  std::cout << gaze_pretty(r.gaze);
  std::printf("iterations     %zu\nfinal loss     %.6g px^2\n", r.trace.size(), r.final_loss.total);
  for (int i = 0; i < kNumEyeParams; ++i) {
    std::printf("%-14s %.6f%s\n", to_string(static_cast<EyeParam>(i)), r.params.values[i],
                r.params.active[i] ? "" : " (frozen)");
  }
  if (!out.empty()) write_text(out, std::string(kGazeCsvHeader) + "\n" + gaze_csv_row(r.gaze) + "\n");
  return 0;
}

struct BenchOpts {
  std::string method = "stereo-normals", scene, out;
  double sigma_c = 0.0, sigma_i = 0.0;
  int reps = 20;
  std::uint64_t seed = 7;
  std::vector<double> positions;
};

int run_bench(const BenchOpts& o) {
  BenchmarkConfig config = BenchmarkConfig::defaults(bench_method_from_string(o.method));
  if (!o.positions.empty()) config.positions = o.positions;
  config.reps = o.reps;
  config.sigma_c = o.sigma_c;
  config.sigma_i = o.sigma_i;
  config.master_seed = o.seed;
  config.validate();
  const SceneConfig scene = scene_or_default(o.scene);
  const BenchmarkResult result = run_benchmark(config, scene);

  fs::create_directories(fs::path(o.out) / "reps");
  write_text((fs::path(o.out) / "result.csv").string(), report(result, ReportFormat::Csv));
  write_text((fs::path(o.out) / "result.json").string(), report(result, ReportFormat::Json));
  const std::string table = report(result, ReportFormat::Table);
  write_text((fs::path(o.out) / "table.txt").string(), table);
  for (const auto& r : result.reps) {
    char name[64];
    std::snprintf(name, sizeof name, "a%+g_r%02d.csv", r.position, r.rep);
    std::string body = "position,rep,seed,ok,error\n" + std::to_string(r.position) + "," + std::to_string(r.rep) +
                       "," + std::to_string(r.seed) + "," + (r.ok ? "1" : "0") + ",\"" + r.error + "\"\n";
    if (r.ok) body += std::string(kGazeCsvHeader) + "\n" + gaze_csv_row(r.gaze) + "\n";
    write_text((fs::path(o.out) / "reps" / name).string(), body);
  }
  std::cout << table;
  std::printf("%zu measurements in %.1f s\n", result.reps.size(), result.total_seconds);
  if (result.aborted()) {
    std::cerr << "aborted positions:\n" << result.diagnostics();
    return kExitAborted;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deflectometric eye tracking on synthetic data"};
  app.name("deflect-gaze");
  app.require_subcommand(1);

  SimulateOpts sim;
  auto* simulate = app.add_subcommand("simulate", "render correspondences and fringe frames of the eye");
  simulate->add_option("--scene", sim.scene, "scene JSON (default: built-in scene)");
  simulate->add_option("--out", sim.out, "output directory")->required();
  simulate->add_option("--azimuth", sim.azimuth, "eye azimuth, degrees");
  simulate->add_option("--elevation", sim.elevation, "eye elevation, degrees");
  simulate->add_option("--pattern", sim.pattern, "crossed|phaseshift|none");
  simulate->add_option("--period-x", sim.period_x, "crossed fringe period along u, screen px");
  simulate->add_option("--period-y", sim.period_y, "crossed fringe period along v, screen px");
  simulate->add_option("--period", sim.period, "phase-shift period, screen px");
  simulate->add_option("--shifts", sim.shifts, "phase shifts per axis");
  simulate->add_option("--sigma-i", sim.sigma_i, "intensity noise");
  simulate->add_option("--sigma-c", sim.sigma_c, "correspondence noise, screen px");
  simulate->add_option("--seed", sim.seed, "noise seed");

  DecodeOpts dec;
  auto* decode = app.add_subcommand("decode", "recover phase maps (and correspondences) from frames");
  decode->add_option("--mode", dec.mode, "cwt|phaseshift");
  decode->add_option("--in", dec.in, "directory written by simulate")->required();
  decode->add_option("--out", dec.out, "output directory")->required();
  decode->add_option("--cam", dec.cam, "camera index");
  decode->add_option("--period-x", dec.period_x, "crossed fringe period along u");
  decode->add_option("--period-y", dec.period_y, "crossed fringe period along v");
  decode->add_option("--period", dec.period, "phase-shift period");
  decode->add_option("--shifts", dec.shifts, "phase shifts per axis");
  decode->add_option("--anchor", dec.anchor, "x y u0 v0: a pixel with known screen coordinates")->expected(4);

  std::string rec_scene, rec_in, rec_out;
  int stride = 1;
  auto* reconstruct = app.add_subcommand("reconstruct", "stereo depth sweep to a normal field CSV");
  reconstruct->add_option("--scene", rec_scene, "scene JSON (default: built-in scene)");
  reconstruct->add_option("--in", rec_in, "directory with cam0/cam1 correspondences")->required();
  reconstruct->add_option("--out", rec_out, "normal field CSV")->required();
  reconstruct->add_option("--stride", stride, "pixel stride");

  std::string gn_in, gn_method = "two-center", gn_out;
  std::uint64_t gn_seed = 1;
  auto* gaze_normals = app.add_subcommand("gaze-normals", "gaze from a normal field");
  gaze_normals->add_option("--in", gn_in, "normal field CSV")->required();
  gaze_normals->add_option("--method", gn_method, "two-center|axis-fit");
  gaze_normals->add_option("--seed", gn_seed, "RANSAC seed");
  gaze_normals->add_option("--out", gn_out, "gaze CSV");

  std::string go_scene, go_measured, go_freeze = "shape", go_trace, go_out;
  int max_iters = 300;
  auto* gaze_optimize = app.add_subcommand("gaze-optimize", "gaze by fitting a simulated eye to correspondences");
  gaze_optimize->add_option("--scene", go_scene, "scene JSON (default: built-in scene)");
  gaze_optimize->add_option("--measured", go_measured, "directory with per-camera correspondences")->required();
  gaze_optimize->add_option("--freeze", go_freeze, "shape|none");
  gaze_optimize->add_option("--max-iters", max_iters, "iteration cap");
  gaze_optimize->add_option("--trace", go_trace, "trace CSV");
  gaze_optimize->add_option("--out", go_out, "gaze CSV");

  BenchOpts bo;
  auto* bench = app.add_subcommand("bench", "rotation-position benchmark");
  bench->add_option("--method", bo.method, "stereo-normals|optimize");
  bench->add_option("--scene", bo.scene, "scene JSON (default: built-in scene)");
  bench->add_option("--sigma-c", bo.sigma_c, "correspondence noise, screen px");
  bench->add_option("--sigma-i", bo.sigma_i, "intensity noise (phase-shift decoding)");
  bench->add_option("--reps", bo.reps, "measurements per position");
  bench->add_option("--seed", bo.seed, "master seed");
  bench->add_option("--positions", bo.positions, "rotation positions, degrees (must include 0)")->delimiter(',');
  bench->add_option("--out", bo.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*decode) return run_decode(dec);
    if (*reconstruct) return run_reconstruct(rec_scene, rec_in, rec_out, stride);
    if (*gaze_normals) return run_gaze_normals(gn_in, gn_method, gn_seed, gn_out);
    if (*gaze_optimize) return run_gaze_optimize(go_scene, go_measured, go_freeze, max_iters, go_trace, go_out);
    if (*bench) return run_bench(bo);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::InvalidArgument:
      case ErrorCode::ParseError:
      case ErrorCode::InvariantViolation:
      case ErrorCode::Io:
        return kExitConfig;
      default:
        return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
