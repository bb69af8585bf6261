#pragma once

// Rotation-stage benchmark: repeated synthetic measurements per rotation
// position, gaze angles relative to a noiseless reference at 0 deg, and the
// mean relative error per position.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "deflect_gaze/decode.hpp"
#include "deflect_gaze/gaze_normals.hpp"
#include "deflect_gaze/optimize.hpp"
#include "deflect_gaze/parallel.hpp"
#include "deflect_gaze/render.hpp"
#include "deflect_gaze/stereo.hpp"

namespace deflect_gaze {

enum class BenchMethod : std::uint8_t { StereoNormals, Optimize };

inline const char* to_string(BenchMethod m) { return m == BenchMethod::StereoNormals ? "stereo-normals" : "optimize"; }

inline BenchMethod bench_method_from_string(const std::string& s) {
  if (s == "stereo-normals") return BenchMethod::StereoNormals;
  if (s == "optimize") return BenchMethod::Optimize;
  throw Error(ErrorCode::InvalidArgument, "unknown method '" + s + "' (stereo-normals|optimize)");
}

struct BenchmarkConfig {
  BenchMethod method = BenchMethod::StereoNormals;
  std::vector<double> positions{-3.0, 0.0, 3.0, 6.0};  // degrees
  int reps = 20;
  double sigma_c = 0.0;  // screen px, added to rendered correspondences
  double sigma_i = 0.0;  // intensity, added to decoded phase-shift frames
  UnitVec3 rotation_axis = world_up();
  std::uint64_t master_seed = 7;

  static BenchmarkConfig defaults(BenchMethod method) {
    BenchmarkConfig c;
    c.method = method;
    if (method == BenchMethod::Optimize) c.positions = {-4.0, -2.0, 0.0, 2.0, 4.0};
    return c;
  }

  void validate() const {
    if (std::find(positions.begin(), positions.end(), 0.0) == positions.end()) {
      throw Error(ErrorCode::InvalidArgument, "positions must include 0");
    }
    if (reps < 1) throw Error(ErrorCode::InvalidArgument, "reps must be >= 1");
    if (!(sigma_c >= 0.0) || !(sigma_i >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise levels must be >= 0");
    if (sigma_c > 0.0 && sigma_i > 0.0) {
      throw Error(ErrorCode::InvalidArgument, "choose correspondence noise or intensity noise, not both");
    }
  }
};

struct RepRecord {
  double position = 0.0;
  int rep = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  double theta = std::numeric_limits<double>::quiet_NaN();  // degrees
  GazeEstimate gaze;
  std::string error;
  double seconds = 0.0;
};

struct PositionSummary {
  double position = 0.0;
  double mean_theta = std::numeric_limits<double>::quiet_NaN();
  double std_theta = std::numeric_limits<double>::quiet_NaN();
  double epsilon = std::numeric_limits<double>::quiet_NaN();
  int n_ok = 0;
  int n_failed = 0;
  bool aborted = false;
};

struct BenchmarkResult {
  BenchmarkConfig config;
  UnitVec3 reference = UnitVec3::assume_unit(Vec3::UnitZ());
  std::vector<PositionSummary> positions;
  std::vector<RepRecord> reps;  // (position, rep) order
  double total_seconds = 0.0;
  double mean_rep_seconds = 0.0;
  double max_rep_seconds = 0.0;

  bool aborted() const {
    return std::any_of(positions.begin(), positions.end(), [](const auto& p) { return p.aborted; });
  }
  std::string diagnostics() const {
    std::ostringstream out;
    for (const auto& p : positions) {
      if (!p.aborted) continue;
      out << "position " << p.position << ": " << p.n_failed << " of " << (p.n_ok + p.n_failed) << " reps failed";
      for (const auto& r : reps) {
        if (r.position == p.position && !r.ok) {
          out << "; first error: " << r.error;
          break;
        }
      }
      out << "\n";
    }
    return out.str();
  }
};

/// ||theta_a - theta_0| - |a||, degrees.
inline double epsilon(double theta_a, double theta_0, double a) { return std::abs(std::abs(theta_a - theta_0) - std::abs(a)); }

inline std::uint64_t rep_seed(std::uint64_t master_seed, double position, int rep) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(master_seed) ^ std::bit_cast<std::uint64_t>(position)) ^ static_cast<std::uint64_t>(rep));
}

namespace detail {

/// Four-step phase shifting per screen axis with a period longer than the
/// panel, so the decoded phase is absolute without unwrapping.
inline CorrespondenceMap decode_with_intensity_noise(const CorrespondenceMap& truth, const ScreenModel& screen,
                                                     double sigma_i, std::uint64_t seed) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  auto axis_coord = [&](Axis axis, std::uint64_t stream, Image<double>& coord, Mask& valid) {
    const double extent = axis == Axis::X ? screen.resolution[0] : screen.resolution[1];
    const PhaseShiftSet set{std::ceil(extent * 1.1), 4, axis};
    std::vector<Frame> frames;
    for (int k = 0; k < set.n_shifts; ++k) {
      frames.push_back(render_frame(truth, set, k, IntensityNoise{sigma_i, pixel_rng(seed, stream, 0)()}));
    }
    const PhaseMap pm = phase_shift_decode(frames, set);
    for (std::size_t i = 0; i < coord.size(); ++i) {
      if (!pm.valid[i]) continue;
      double phi = pm.phase[i];
      if (phi < 0.0) phi += two_pi;
      coord[i] = phi * set.period / two_pi;
      valid[i] = 1;
    }
  };
  CorrespondenceMap out(truth.width(), truth.height());
  Mask vx(truth.width(), truth.height(), 0), vy(truth.width(), truth.height(), 0);
  axis_coord(Axis::X, 0x51, out.u, vx);
  axis_coord(Axis::Y, 0x52, out.v, vy);
  for (std::size_t i = 0; i < out.valid.size(); ++i) {
    out.valid[i] = (vx[i] && vy[i] && screen.contains(out.u[i], out.v[i])) ? 1 : 0;
    if (!out.valid[i]) out.u[i] = out.v[i] = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

inline std::vector<CorrespondenceMap> simulate_measurement(const SceneConfig& rotated, const BenchmarkConfig& config,
                                                           std::uint64_t seed, bool noiseless) {
  std::vector<CorrespondenceMap> maps;
  for (std::size_t c = 0; c < rotated.cameras.size(); ++c) {
    CorrespondenceMap m = render_correspondence(rotated, c);
    const std::uint64_t cam_seed = pixel_rng(seed, 0xca3, c)();
    if (!noiseless && config.sigma_c > 0.0) m = add_correspondence_noise(m, config.sigma_c, cam_seed);
    if (!noiseless && config.sigma_i > 0.0) m = decode_with_intensity_noise(m, rotated.screen, config.sigma_i, cam_seed);
    maps.push_back(std::move(m));
  }
  return maps;
}

inline GazeEstimate estimate_gaze(const SceneConfig& scene, std::span<const CorrespondenceMap> maps,
                                  BenchMethod method, std::uint64_t seed) {
  if (method == BenchMethod::StereoNormals) {
    const NormalField field = reconstruct_field(scene, maps[0], maps[1], default_sweep(scene));
    ClusterParams cluster;
    cluster.rng_seed = seed;
    return gaze_two_center(backtrace_lines(field), cluster);
  }
  return optimize_gaze(init_guess(maps, scene), maps, scene, OptConfig{}).gaze;
}

}  // namespace detail

/// Runs every (position, rep) measurement. The eye of `scene` is the 0 deg
/// pose; each rep rotates it afresh about config.rotation_axis. A rep that
/// throws is recorded as failed; a position with more than 20% failed reps
/// is marked aborted. Results do not depend on the thread count.
inline BenchmarkResult run_benchmark(const BenchmarkConfig& config, const SceneConfig& scene) {
  config.validate();
  if (config.method == BenchMethod::StereoNormals && scene.cameras.size() != 2) {
    throw Error(ErrorCode::InvalidArgument, "stereo-normals needs exactly two cameras");
  }
  const auto start = std::chrono::steady_clock::now();
  BenchmarkResult result;
  result.config = config;

  const auto ref_maps = detail::simulate_measurement(scene, config, 0, true);
  result.reference = detail::estimate_gaze(scene, ref_maps, config.method, rep_seed(config.master_seed, 0.0, -1)).direction;

  const std::size_t n_pos = config.positions.size();
  const std::size_t n_rep = static_cast<std::size_t>(config.reps);
  result.reps.resize(n_pos * n_rep);
  parallel_for(result.reps.size(), [&](std::size_t job) {
    RepRecord& rec = result.reps[job];
    rec.position = config.positions[job / n_rep];
    rec.rep = static_cast<int>(job % n_rep);
    rec.seed = rep_seed(config.master_seed, rec.position, rec.rep);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      SceneConfig rotated = scene;
      rotated.eye = rotate_eye_about(scene.eye, config.rotation_axis, rec.position);
      const auto maps = detail::simulate_measurement(rotated, config, rec.seed, false);
      rec.gaze = detail::estimate_gaze(scene, maps, config.method, rec.seed);
      rec.theta = relative_gaze_angle(rec.gaze.direction, result.reference, config.rotation_axis);
      rec.ok = true;
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });

  for (std::size_t p = 0; p < n_pos; ++p) {
    PositionSummary s;
    s.position = config.positions[p];
    double sum = 0.0;
    for (std::size_t r = 0; r < n_rep; ++r) {
      const auto& rec = result.reps[p * n_rep + r];
      if (rec.ok) {
        sum += rec.theta;
        ++s.n_ok;
      } else {
        ++s.n_failed;
      }
    }
    if (s.n_ok > 0) {
      s.mean_theta = sum / s.n_ok;
      double var = 0.0;
      for (std::size_t r = 0; r < n_rep; ++r) {
        const auto& rec = result.reps[p * n_rep + r];
        if (rec.ok) var += (rec.theta - s.mean_theta) * (rec.theta - s.mean_theta);
      }
      s.std_theta = s.n_ok > 1 ? std::sqrt(var / (s.n_ok - 1)) : 0.0;
    }
    s.aborted = s.n_failed * 5 > static_cast<int>(n_rep);
    result.positions.push_back(s);
  }
  double theta_0 = 0.0;
  for (const auto& s : result.positions)
    if (s.position == 0.0) theta_0 = s.mean_theta;
  for (auto& s : result.positions) s.epsilon = s.position == 0.0 ? 0.0 : epsilon(s.mean_theta, theta_0, s.position);

  for (const auto& r : result.reps) {
    result.mean_rep_seconds += r.seconds / static_cast<double>(result.reps.size());
    result.max_rep_seconds = std::max(result.max_rep_seconds, r.seconds);
  }
  result.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

enum class ReportFormat : std::uint8_t { Csv, Table, Json };

namespace detail {

inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_deg(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }
inline double number_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace detail

inline constexpr const char* kBenchCsvHeader = "kind,position,rep,seed,ok,theta,mean,std,epsilon,n_ok,n_failed";

/// Runtimes go to JSON only, so the CSV is reproducible bit for bit.
inline std::string report(const BenchmarkResult& result, ReportFormat format) {
  using detail::fmt17;
  const auto& cfg = result.config;
  if (format == ReportFormat::Csv) {
    std::ostringstream out;
    out << "# method=" << to_string(cfg.method) << " sigma_c=" << fmt17(cfg.sigma_c) << " sigma_i=" << fmt17(cfg.sigma_i)
        << " reps=" << cfg.reps << " master_seed=" << cfg.master_seed << " axis=" << fmt17(cfg.rotation_axis.x()) << ";"
        << fmt17(cfg.rotation_axis.y()) << ";" << fmt17(cfg.rotation_axis.z()) << "\n";
    out << kBenchCsvHeader << "\n";
    for (const auto& r : result.reps) {
      out << "rep," << fmt17(r.position) << "," << r.rep << "," << r.seed << "," << (r.ok ? 1 : 0) << ","
          << fmt17(r.theta) << ",,,,,\n";
    }
    for (const auto& s : result.positions) {
      out << "position," << fmt17(s.position) << ",,,,," << fmt17(s.mean_theta) << "," << fmt17(s.std_theta) << ","
          << fmt17(s.epsilon) << "," << s.n_ok << "," << s.n_failed << "\n";
    }
    return out.str();
  }
  if (format == ReportFormat::Table) {
    std::vector<std::string> head{"Rotation position a"}, mean{"Mean relative error e_0 (deg)"},
        spread{"Std of theta_a (deg)"};
    for (const auto& s : result.positions) {
      if (s.position == 0.0) continue;
      head.push_back(detail::fmt_deg(s.position, 1) + " deg");
      mean.push_back(s.aborted ? "aborted" : detail::fmt_deg(s.epsilon, 3));
      spread.push_back(detail::fmt_deg(s.std_theta, 3));
    }
    std::vector<std::size_t> width(head.size(), 0);
    for (std::size_t i = 0; i < head.size(); ++i) width[i] = std::max({head[i].size(), mean[i].size(), spread[i].size()});
    std::ostringstream out;
    out << "Evaluation of estimated gaze direction (" << to_string(cfg.method) << ", sigma_c " << cfg.sigma_c
        << " px, sigma_I " << cfg.sigma_i << ", " << cfg.reps << " reps, seed " << cfg.master_seed << ")\n";
    for (const auto* row : {&head, &mean, &spread}) {
      for (std::size_t i = 0; i < row->size(); ++i) {
        std::string cell = (*row)[i];
        cell.resize(width[i], ' ');
        out << (i ? " | " : "") << cell;
      }
      out << "\n";
    }
    return out.str();
  }
  nlohmann::json j;
  j["config"] = {{"method", to_string(cfg.method)},
                 {"positions", cfg.positions},
                 {"reps", cfg.reps},
                 {"sigma_c", cfg.sigma_c},
                 {"sigma_i", cfg.sigma_i},
                 {"rotation_axis", {cfg.rotation_axis.x(), cfg.rotation_axis.y(), cfg.rotation_axis.z()}},
                 {"master_seed", cfg.master_seed}};
  j["reference"] = {result.reference.x(), result.reference.y(), result.reference.z()};
  j["positions"] = nlohmann::json::array();
  for (const auto& s : result.positions) {
    j["positions"].push_back({{"position", s.position},
                              {"mean_theta", detail::number_or_null(s.mean_theta)},
                              {"std_theta", detail::number_or_null(s.std_theta)},
                              {"epsilon", detail::number_or_null(s.epsilon)},
                              {"n_ok", s.n_ok},
                              {"n_failed", s.n_failed},
                              {"aborted", s.aborted}});
  }
  j["reps"] = nlohmann::json::array();
  for (const auto& r : result.reps) {
    j["reps"].push_back({{"position", r.position},
                         {"rep", r.rep},
                         {"seed", r.seed},
                         {"ok", r.ok},
                         {"theta", detail::number_or_null(r.theta)},
                         {"error", r.error},
                         {"seconds", r.seconds}});
  }
  j["runtime"] = {{"total_seconds", result.total_seconds},
                  {"mean_rep_seconds", result.mean_rep_seconds},
                  {"max_rep_seconds", result.max_rep_seconds}};
  return j.dump(2) + "\n";
}

/// Inverse of the JSON report (gaze estimates per rep are not carried).
inline BenchmarkResult result_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    BenchmarkResult r;
    const auto& c = j.at("config");
    r.config.method = bench_method_from_string(c.at("method").get<std::string>());
    r.config.positions = c.at("positions").get<std::vector<double>>();
    r.config.reps = c.at("reps").get<int>();
    r.config.sigma_c = c.at("sigma_c").get<double>();
    r.config.sigma_i = c.at("sigma_i").get<double>();
    const auto ax = c.at("rotation_axis").get<std::vector<double>>();
    r.config.rotation_axis = UnitVec3::normalize(Vec3(ax.at(0), ax.at(1), ax.at(2)));
    r.config.master_seed = c.at("master_seed").get<std::uint64_t>();
    const auto ref = j.at("reference").get<std::vector<double>>();
    r.reference = UnitVec3::normalize(Vec3(ref.at(0), ref.at(1), ref.at(2)));
    for (const auto& p : j.at("positions")) {
      PositionSummary s;
      s.position = p.at("position").get<double>();
      s.mean_theta = detail::number_or_nan(p.at("mean_theta"));
      s.std_theta = detail::number_or_nan(p.at("std_theta"));
      s.epsilon = detail::number_or_nan(p.at("epsilon"));
      s.n_ok = p.at("n_ok").get<int>();
      s.n_failed = p.at("n_failed").get<int>();
      s.aborted = p.at("aborted").get<bool>();
      r.positions.push_back(s);
    }
    for (const auto& p : j.at("reps")) {
      RepRecord rec;
      rec.position = p.at("position").get<double>();
      rec.rep = p.at("rep").get<int>();
      rec.seed = p.at("seed").get<std::uint64_t>();
      rec.ok = p.at("ok").get<bool>();
      rec.theta = detail::number_or_nan(p.at("theta"));
      rec.error = p.at("error").get<std::string>();
      rec.seconds = p.at("seconds").get<double>();
      r.reps.push_back(rec);
    }
    const auto& rt = j.at("runtime");
    r.total_seconds = rt.at("total_seconds").get<double>();
    r.mean_rep_seconds = rt.at("mean_rep_seconds").get<double>();
    r.max_rep_seconds = rt.at("max_rep_seconds").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("benchmark json: ") + e.what());
  }
}

}  // namespace deflect_gaze
