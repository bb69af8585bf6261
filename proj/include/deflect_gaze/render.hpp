#pragma once

// Forward deflectometry simulator: camera ray -> specular eye reflection ->
// screen plane, yielding ground-truth correspondences and pattern frames.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "deflect_gaze/geometry.hpp"
#include "deflect_gaze/image.hpp"
#include "deflect_gaze/parallel.hpp"
#include "deflect_gaze/scene.hpp"

namespace deflect_gaze {

enum class Axis : std::uint8_t { X, Y };

struct CrossedFringe {
  double period_x = 16.0;  // screen px
  double period_y = 16.0;
  double amp_x = 0.25;
  double amp_y = 0.25;
  double bias = 0.5;
};

struct PhaseShiftSet {
  double period = 32.0;  // screen px
  int n_shifts = 4;
  Axis direction = Axis::X;
};

struct ImagePattern {
  Image<double> intensity;  // W_s x H_s, values in [0, 1]
};

using PatternSpec = std::variant<CrossedFringe, PhaseShiftSet, ImagePattern>;

inline void validate_pattern(const PatternSpec& pattern) {
  if (const auto* cf = std::get_if<CrossedFringe>(&pattern)) {
    if (cf->period_x < 4.0 || cf->period_y < 4.0) throw Error(ErrorCode::InvalidArgument, "fringe periods >= 4 px");
    if (cf->amp_x < 0.0 || cf->amp_x > 0.25 || cf->amp_y < 0.0 || cf->amp_y > 0.25) {
      throw Error(ErrorCode::InvalidArgument, "fringe amplitudes must lie in [0, 0.25]");
    }
    if (cf->bias < 0.0 || cf->bias > 1.0) throw Error(ErrorCode::InvalidArgument, "fringe bias must lie in [0, 1]");
    if (cf->bias + cf->amp_x + cf->amp_y > 1.0 + 1e-12) {
      throw Error(ErrorCode::InvalidArgument, "bias + amp_x + amp_y <= 1");
    }
    if (cf->bias - cf->amp_x - cf->amp_y < -1e-12) {
      throw Error(ErrorCode::InvalidArgument, "bias - amp_x - amp_y >= 0");
    }
  } else if (const auto* ps = std::get_if<PhaseShiftSet>(&pattern)) {
    if (ps->period < 4.0) throw Error(ErrorCode::InvalidArgument, "phase-shift period >= 4 px");
    if (ps->n_shifts < 3) throw Error(ErrorCode::InvalidArgument, "phase-shift set needs >= 3 shifts");
  } else {
    const auto& img = std::get<ImagePattern>(pattern).intensity;
    if (img.width() < 2 || img.height() < 2) throw Error(ErrorCode::InvalidArgument, "image pattern too small");
  }
}

inline double pattern_value(const PatternSpec& pattern, double u, double v, int shift_index) {
  if (!std::isfinite(u) || !std::isfinite(v) || u < 0.0 || v < 0.0) {
    throw Error(ErrorCode::OutOfRange, "screen coordinate outside the panel");
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  if (const auto* cf = std::get_if<CrossedFringe>(&pattern)) {
    if (shift_index != 0) throw Error(ErrorCode::OutOfRange, "crossed fringe has a single shift");
    return cf->bias + cf->amp_x * std::cos(two_pi * u / cf->period_x) + cf->amp_y * std::cos(two_pi * v / cf->period_y);
  }
  if (const auto* ps = std::get_if<PhaseShiftSet>(&pattern)) {
    if (shift_index < 0 || shift_index >= ps->n_shifts) throw Error(ErrorCode::OutOfRange, "shift index out of range");
    const double coord = ps->direction == Axis::X ? u : v;
    return 0.5 + 0.4 * std::cos(two_pi * coord / ps->period + two_pi * shift_index / ps->n_shifts);
  }
  const auto& img = std::get<ImagePattern>(pattern).intensity;
  if (shift_index != 0) throw Error(ErrorCode::OutOfRange, "image pattern has a single shift");
  if (u > img.width() - 1 || v > img.height() - 1) {
    // The last half pixel of the panel samples the edge texel.
    if (u >= img.width() || v >= img.height()) throw Error(ErrorCode::OutOfRange, "screen coordinate outside the image");
  }
  const double uc = std::min(u, static_cast<double>(img.width() - 1));
  const double vc = std::min(v, static_cast<double>(img.height() - 1));
  const int x0 = std::min(static_cast<int>(uc), img.width() - 2);
  const int y0 = std::min(static_cast<int>(vc), img.height() - 2);
  const double fx = uc - x0;
  const double fy = vc - y0;
  return (1 - fx) * (1 - fy) * img(x0, y0) + fx * (1 - fy) * img(x0 + 1, y0) + (1 - fx) * fy * img(x0, y0 + 1) +
         fx * fy * img(x0 + 1, y0 + 1);
}

/// Per-camera-pixel screen coordinates. Invalid pixels hold NaN.
struct CorrespondenceMap {
  CorrespondenceMap() = default;
  CorrespondenceMap(int width, int height)
      : u(width, height, std::numeric_limits<double>::quiet_NaN()),
        v(width, height, std::numeric_limits<double>::quiet_NaN()),
        valid(width, height, 0) {}

  int width() const { return valid.width(); }
  int height() const { return valid.height(); }
  bool is_valid(int x, int y) const { return valid.in_bounds(x, y) && valid(x, y) != 0; }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto m : valid.data()) n += m != 0;
    return n;
  }
  void set(int x, int y, double su, double sv) {
    u(x, y) = su;
    v(x, y) = sv;
    valid(x, y) = 1;
  }

  Image<double> u;
  Image<double> v;
  Mask valid;
};

using Frame = Image<double>;

/// Ground truth recorded alongside a render, for oracles and diagnostics.
struct RenderTruth {
  CorrespondenceMap map;
  Image<std::uint8_t> region;  // Region of the eye hit (even where the screen was missed)
  Image<double> depth;         // t along the unit camera ray; NaN on a miss
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
};

inline constexpr double kBackground = 0.02;

/// Traces every pixel of `camera` against `surface` (a callable
/// Ray -> optional<SurfaceHit>) and the screen plane.
template <typename Surface>
RenderTruth render_with_surface(const CameraModel& camera, const ScreenModel& screen, const Surface& surface) {
  const int w = camera.width();
  const int h = camera.height();
  RenderTruth out{CorrespondenceMap(w, h), Image<std::uint8_t>(w, h, 0),
                  Image<double>(w, h, std::numeric_limits<double>::quiet_NaN()),
                  std::vector<Vec3>(static_cast<std::size_t>(w) * h, Vec3::Constant(std::nan(""))),
                  std::vector<Vec3>(static_cast<std::size_t>(w) * h, Vec3::Constant(std::nan("")))};
  const Vec3 s_normal = screen.normal();
  const Vec3 s_origin = screen.pose.translation;
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < w; ++x) {
      const Ray ray = camera.pixel_ray(x, y);
      const std::optional<SurfaceHit> hit = surface(ray);
      if (!hit) continue;
      const std::size_t idx = out.region.index(x, y);
      out.region[idx] = static_cast<std::uint8_t>(hit->region);
      out.depth[idx] = hit->t;
      out.points[idx] = hit->point;
      out.normals[idx] = hit->normal.vec();
      const UnitVec3 r = reflect(ray.dir, hit->normal);
      const double denom = r.dot(s_normal);
      if (std::abs(denom) < kGeomEps) continue;
      const double t = (s_origin - hit->point).dot(s_normal) / denom;
      if (!(t > kGeomEps)) continue;
      const auto [su, sv] = screen.to_pixel(hit->point + t * r.vec());
      if (!screen.contains(su, sv)) continue;
      out.map.set(x, y, su, sv);
    }
  });
  return out;
}

inline RenderTruth render_truth(const SceneConfig& scene, std::size_t cam_index) {
  if (cam_index >= scene.cameras.size()) throw Error(ErrorCode::InvalidArgument, "camera index out of range");
  const EyeModel& eye = scene.eye;
  return render_with_surface(scene.cameras[cam_index], scene.screen,
                             [&eye](const Ray& ray) { return eye_surface_hit(eye, ray); });
}

inline CorrespondenceMap render_correspondence(const SceneConfig& scene, std::size_t cam_index) {
  return render_truth(scene, cam_index).map;
}

/// Independent generator per (seed, stream, pixel) so noise never depends on
/// traversal order or thread count.
inline std::mt19937_64 pixel_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t pixel) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return std::mt19937_64(mix(mix(mix(seed) ^ stream) ^ pixel));
}

struct IntensityNoise {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

inline Frame render_frame(const CorrespondenceMap& corr, const PatternSpec& pattern, int shift_index,
                          const IntensityNoise& noise) {
  validate_pattern(pattern);
  Frame frame(corr.width(), corr.height(), kBackground);
  parallel_for(static_cast<std::size_t>(corr.height()), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < corr.width(); ++x) {
      const std::size_t idx = frame.index(x, y);
      double value = corr.is_valid(x, y) ? pattern_value(pattern, corr.u[idx], corr.v[idx], shift_index) : kBackground;
      if (noise.sigma > 0.0) {
        auto rng = pixel_rng(noise.seed, 0x1a7e75 + static_cast<std::uint64_t>(shift_index), idx);
        std::normal_distribution<double> gauss(0.0, noise.sigma);
        value = std::clamp(value + gauss(rng), 0.0, 1.0);
      }
      frame[idx] = value;
    }
  });
  return frame;
}

inline Frame render_frame(const SceneConfig& scene, std::size_t cam_index, const PatternSpec& pattern,
                          int shift_index, const IntensityNoise& noise) {
  return render_frame(render_correspondence(scene, cam_index), pattern, shift_index, noise);
}

inline CorrespondenceMap add_correspondence_noise(const CorrespondenceMap& map, double sigma_c, std::uint64_t seed) {
  if (!(sigma_c >= 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma_c must be >= 0");
  CorrespondenceMap out = map;
  if (sigma_c == 0.0) return out;
  parallel_for(static_cast<std::size_t>(map.height()), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < map.width(); ++x) {
      if (!map.is_valid(x, y)) continue;
      const std::size_t idx = map.valid.index(x, y);
      auto rng = pixel_rng(seed, 0xc0de, idx);
      std::normal_distribution<double> gauss(0.0, sigma_c);
      out.u[idx] += gauss(rng);
      out.v[idx] += gauss(rng);
    }
  });
  return out;
}

inline void write_correspondence(const std::string& pfm_path, const std::string& mask_path,
                                 const CorrespondenceMap& map) {
  Image<double> zero(map.width(), map.height(), 0.0);
  Image<double> u = map.u;
  Image<double> v = map.v;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!map.valid[i]) u[i] = v[i] = 0.0;
  }
  write_pfm(pfm_path, {&u, &v, &zero});
  write_pgm8(mask_path, map.valid);
}

inline CorrespondenceMap read_correspondence(const std::string& pfm_path, const std::string& mask_path) {
  const auto ch = read_pfm(pfm_path);
  const Mask mask = read_mask(mask_path);
  if (ch.size() != 3 || mask.width() != ch[0].width() || mask.height() != ch[0].height()) {
    throw Error(ErrorCode::ParseError, "correspondence files '" + pfm_path + "' and '" + mask_path + "' disagree");
  }
  CorrespondenceMap map(mask.width(), mask.height());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      map.u[i] = ch[0][i];
      map.v[i] = ch[1][i];
      map.valid[i] = 1;
    }
  }
  return map;
}

}  // namespace deflect_gaze
