#pragma once

// Stereo resolution of the deflectometric normal-depth ambiguity: for each
// camera-1 pixel, sweep depth along its view ray and keep the depth at which
// camera 1 and camera 2 imply the same surface normal.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deflect_gaze/decode.hpp"
#include "deflect_gaze/geometry.hpp"
#include "deflect_gaze/parallel.hpp"
#include "deflect_gaze/render.hpp"
#include "deflect_gaze/scene.hpp"

namespace deflect_gaze {

struct DepthSweepParams {
  double t_min = 33.0;  // mm along the unit camera-1 ray
  double t_max = 49.0;
  int n_steps = 256;
  bool refine = true;
  // reconstruct_field drops samples whose stereo disagreement exceeds this
  // (radians); occluded or vignetted depths never reach it.
  double max_consistency = 0.01;

  void validate() const {
    if (!(t_min < t_max)) throw Error(ErrorCode::InvalidArgument, "depth sweep needs t_min < t_max");
    if (n_steps < 16) throw Error(ErrorCode::InvalidArgument, "depth sweep needs >= 16 steps");
  }
};

/// +-8 mm around a nominal depth three quarters of a sclera radius in front of
/// the sclera center.
inline DepthSweepParams default_sweep(const SceneConfig& scene) {
  const double nominal =
      (scene.cameras.at(0).center() - scene.eye.sclera_center).norm() - 0.75 * scene.eye.sclera_radius;
  DepthSweepParams p;
  p.t_min = nominal - 8.0;
  p.t_max = nominal + 8.0;
  return p;
}

struct NormalSample {
  Vec3 point;
  UnitVec3 normal;
  Pixel pixel;
  double consistency = 0.0;  // radians
};

struct NormalField {
  std::vector<NormalSample> samples;
  int camera_id = 0;
};

namespace detail {

inline std::optional<Vec3> bisector(const Vec3& to_camera, const Vec3& to_screen) {
  const Vec3 s = to_camera.normalized() + to_screen.normalized();
  const double n = s.norm();
  if (n < kGeomEps) return std::nullopt;
  return s / n;
}

/// Bilinear lookup of a correspondence map; none if any corner with nonzero
/// weight is invalid or outside the frame.
inline std::optional<std::array<double, 2>> sample_bilinear(const CorrespondenceMap& map, double x, double y) {
  if (!(x >= 0.0 && y >= 0.0 && x <= map.width() - 1 && y <= map.height() - 1)) return std::nullopt;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  double u = 0.0, v = 0.0;
  const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  const int cx[4] = {x0, x0 + 1, x0, x0 + 1};
  const int cy[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int k = 0; k < 4; ++k) {
    if (wts[k] == 0.0) continue;
    if (!map.is_valid(cx[k], cy[k])) return std::nullopt;
    const std::size_t i = map.valid.index(cx[k], cy[k]);
    u += wts[k] * map.u[i];
    v += wts[k] * map.v[i];
  }
  return std::array<double, 2>{u, v};
}

/// Per-pixel constants of the sweep, hoisted out of the depth loop.
struct SweepContext {
  const SceneConfig& scene;
  const CorrespondenceMap& corr2;
  Vec3 c1, c2, d1, s1;

  std::optional<std::pair<double, Vec3>> evaluate(double t) const {
    const Vec3 p = c1 + t * d1;
    const auto n1 = bisector(-d1, s1 - p);
    if (!n1) return std::nullopt;
    const auto proj = scene.cameras[1].project(p);
    if (!proj) return std::nullopt;
    const auto uv = sample_bilinear(corr2, (*proj)[0], (*proj)[1]);
    if (!uv) return std::nullopt;
    const auto n2 = bisector(c2 - p, scene.screen.to_world((*uv)[0], (*uv)[1]) - p);
    if (!n2) return std::nullopt;
    return std::make_pair(std::atan2(n1->cross(*n2).norm(), n1->dot(*n2)), *n1);
  }
};

inline SweepContext make_context(const SceneConfig& scene, Pixel pixel1, const CorrespondenceMap& corr1,
                                 const CorrespondenceMap& corr2) {
  const auto& cam1 = scene.cameras.at(0);
  const auto& cam2 = scene.cameras.at(1);
  const std::size_t i = corr1.valid.index(pixel1.x, pixel1.y);
  return SweepContext{scene, corr2, cam1.center(), cam2.center(), cam1.pixel_ray(pixel1.x, pixel1.y).dir.vec(),
                      scene.screen.to_world(corr1.u[i], corr1.v[i])};
}

inline void require_stereo(const SceneConfig& scene) {
  if (scene.cameras.size() != 2) throw Error(ErrorCode::InvalidArgument, "stereo reconstruction needs two cameras");
}

}  // namespace detail

/// Normal implied by one camera if the surface sits at depth t on the pixel ray.
inline NormalSample candidate_normal(const CameraModel& camera, Pixel pixel, double t, const Vec3& screen_point) {
  if (!(t > 0.0)) throw Error(ErrorCode::InvalidArgument, "depth must be positive");
  const Ray ray = camera.pixel_ray(pixel.x, pixel.y);
  const Vec3 p = ray.at(t);
  const Vec3 to_screen = screen_point - p;
  if (to_screen.norm() < kGeomEps) throw Error(ErrorCode::DegenerateBisector, "screen point coincides with P");
  const UnitVec3 n = half_vector_normal(-ray.dir, UnitVec3::normalize(to_screen));
  return NormalSample{p, n, pixel, 0.0};
}

/// Angle in radians between the normals camera 1 and camera 2 imply at depth
/// t on pixel1's ray; none when camera 2 has no usable correspondence there.
inline std::optional<double> stereo_consistency(const SceneConfig& scene, Pixel pixel1, double t,
                                                const CorrespondenceMap& corr1, const CorrespondenceMap& corr2) {
  detail::require_stereo(scene);
  if (!corr1.is_valid(pixel1.x, pixel1.y)) throw Error(ErrorCode::InvalidArgument, "pixel is invalid in corr1");
  const auto ctx = detail::make_context(scene, pixel1, corr1, corr2);
  const auto r = ctx.evaluate(t);
  if (!r) return std::nullopt;
  return r->first;
}

inline std::optional<NormalSample> solve_depth(const SceneConfig& scene, Pixel pixel1, const CorrespondenceMap& corr1,
                                               const CorrespondenceMap& corr2, const DepthSweepParams& params) {
  detail::require_stereo(scene);
  params.validate();
  if (!corr1.is_valid(pixel1.x, pixel1.y)) return std::nullopt;
  const auto ctx = detail::make_context(scene, pixel1, corr1, corr2);

  const int n = params.n_steps;
  const double dt = (params.t_max - params.t_min) / (n - 1);
  std::vector<double> cons(n, std::numeric_limits<double>::infinity());
  int usable = 0;
  int best = -1;
  for (int k = 0; k < n; ++k) {
    if (auto r = ctx.evaluate(params.t_min + k * dt)) {
      cons[k] = r->first;
      ++usable;
      if (best < 0 || cons[k] < cons[best]) best = k;
    }
  }
  if (usable < 8) return std::nullopt;

  double t_best = params.t_min + best * dt;
  double c_best = cons[best];
  if (params.refine && best > 0 && best < n - 1 && std::isfinite(cons[best - 1]) && std::isfinite(cons[best + 1])) {
    // The squared angle is smooth through the optimum, so fit the parabola to it.
    const double a = cons[best - 1] * cons[best - 1];
    const double b = c_best * c_best;
    const double c = cons[best + 1] * cons[best + 1];
    const double denom = a - 2.0 * b + c;
    if (denom > 0.0) {
      const double offset = 0.5 * (a - c) / denom;
      const double t_vertex = t_best + std::clamp(offset, -1.0, 1.0) * dt;
      if (auto r = ctx.evaluate(t_vertex); r && r->first <= c_best) {
        t_best = t_vertex;
        c_best = r->first;
      }
    }
  }
  const auto r = ctx.evaluate(t_best);
  return NormalSample{ctx.c1 + t_best * ctx.d1, UnitVec3::assume_unit(r->second), pixel1, c_best};
}

/// Depth-solves every valid camera-1 pixel on a `stride` grid, keeping
/// samples within params.max_consistency; samples come back in pixel-index
/// order whatever the thread count.
inline NormalField reconstruct_field(const SceneConfig& scene, const CorrespondenceMap& corr1,
                                     const CorrespondenceMap& corr2, const DepthSweepParams& params, int stride = 1) {
  detail::require_stereo(scene);
  params.validate();
  if (stride < 1) throw Error(ErrorCode::InvalidArgument, "stride must be >= 1");
  const int h = corr1.height();
  std::vector<std::vector<NormalSample>> rows(static_cast<std::size_t>(h));
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    if (y % stride != 0) return;
    for (int x = 0; x < corr1.width(); x += stride) {
      if (!corr1.is_valid(x, y)) continue;
      auto s = solve_depth(scene, Pixel{x, y}, corr1, corr2, params);
      if (s && s->consistency <= params.max_consistency) rows[row].push_back(*s);
    }
  });
  NormalField field;
  for (auto& r : rows) field.samples.insert(field.samples.end(), r.begin(), r.end());
  if (field.samples.size() < 100) {
    throw Error(ErrorCode::EmptyField, "only " + std::to_string(field.samples.size()) + " samples survived");
  }
  return field;
}

inline constexpr const char* kNormalFieldHeader = "px,py,X,Y,Z,nx,ny,nz,consistency";

inline void write_normal_field(const std::string& path, const NormalField& field) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out << kNormalFieldHeader << "\n";
  char buf[512];
  for (const auto& s : field.samples) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.pixel.x, s.pixel.y,
                  s.point.x(), s.point.y(), s.point.z(), s.normal.x(), s.normal.y(), s.normal.z(), s.consistency);
    out << buf;
  }
}

inline NormalField read_normal_field(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kNormalFieldHeader) {
    throw Error(ErrorCode::ParseError, "'" + path + "': expected header " + kNormalFieldHeader);
  }
  NormalField field;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (...) {
        throw Error(ErrorCode::ParseError, "'" + path + "' line " + std::to_string(lineno) + ": bad number");
      }
    }
    if (v.size() != 9) {
      throw Error(ErrorCode::ParseError, "'" + path + "' line " + std::to_string(lineno) + ": expected 9 columns");
    }
    field.samples.push_back(NormalSample{Vec3(v[2], v[3], v[4]), UnitVec3::normalize(Vec3(v[5], v[6], v[7])),
                                         Pixel{static_cast<int>(v[0]), static_cast<int>(v[1])}, v[8]});
  }
  return field;
}

}  // namespace deflect_gaze
