#pragma once

// Inverse rendering: adjust a simulated eye's rotation, translation and shape
// until its rendered screen-camera correspondences match the measured ones.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deflect_gaze/gaze_normals.hpp"
#include "deflect_gaze/parallel.hpp"
#include "deflect_gaze/render.hpp"
#include "deflect_gaze/scene.hpp"

namespace deflect_gaze {

enum class EyeParam : int { Azimuth = 0, Elevation, Tx, Ty, Tz, CorneaRadius, ScleraRadius, CorneaOffset };
inline constexpr int kNumEyeParams = 8;

inline const char* to_string(EyeParam p) {
  static constexpr const char* names[kNumEyeParams] = {"azimuth", "elevation", "tx", "ty", "tz", "R_c", "R_s", "d_c"};
  return names[static_cast<int>(p)];
}

inline bool is_angle(int index) { return index <= static_cast<int>(EyeParam::Elevation); }

/// Rotation (degrees), translation of the sclera center from nominal (mm) and
/// shape (mm). Frozen entries are held fixed by the descent.
struct EyeParamVector {
  std::array<double, kNumEyeParams> values{};
  std::array<bool, kNumEyeParams> active{true, true, true, true, true, false, false, false};

  double& operator[](EyeParam p) { return values[static_cast<int>(p)]; }
  double operator[](EyeParam p) const { return values[static_cast<int>(p)]; }
  Vec3 translation() const { return Vec3(values[2], values[3], values[4]); }

  int active_count() const { return static_cast<int>(std::count(active.begin(), active.end(), true)); }

  static EyeParamVector from_eye(const EyeModel& eye) {
    EyeParamVector p;
    p[EyeParam::CorneaRadius] = eye.cornea_radius;
    p[EyeParam::ScleraRadius] = eye.sclera_radius;
    p[EyeParam::CorneaOffset] = eye.cornea_offset;
    return p;
  }

  void freeze_shape() {
    for (int i = static_cast<int>(EyeParam::CorneaRadius); i < kNumEyeParams; ++i) active[i] = false;
  }
};

/// Eye at these parameters: the nominal eye rotated about its sclera center,
/// then displaced.
inline EyeModel materialize(const EyeParamVector& params, const EyeModel& nominal) {
  EyeModel eye = rotate_eye(nominal, params[EyeParam::Azimuth], params[EyeParam::Elevation]);
  eye.sclera_center = nominal.sclera_center + params.translation();
  eye.cornea_radius = params[EyeParam::CorneaRadius];
  eye.sclera_radius = params[EyeParam::ScleraRadius];
  eye.cornea_offset = params[EyeParam::CorneaOffset];
  return eye;
}

/// Keeps shape parameters feasible: radii > 1 mm, R_c < R_s - 0.5, and the
/// corneal apex protruding beyond the sclera.
inline EyeParamVector project_to_bounds(EyeParamVector p) {
  constexpr double margin = 1e-6;
  double& rc = p.values[static_cast<int>(EyeParam::CorneaRadius)];
  double& rs = p.values[static_cast<int>(EyeParam::ScleraRadius)];
  double& dc = p.values[static_cast<int>(EyeParam::CorneaOffset)];
  rc = std::max(rc, 1.0 + margin);
  rs = std::max(rs, rc + 0.5 + margin);
  dc = std::max({dc, rs - rc + margin, margin});
  return p;
}

enum class GradMode : std::uint8_t { FiniteDiff, AnalyticIfAvailable };

struct OptConfig {
  int max_iters = 300;
  double step_deg = 0.5;  // initial step, angle group
  double step_mm = 0.5;   // initial step, length group
  double step_decay = 0.5;
  double step_growth = 1.25;  // after an accepted step, capped at the initial step
  double momentum = 0.8;
  GradMode grad_mode = GradMode::FiniteDiff;
  double fd_step_deg = 1e-3;
  double fd_step_mm = 1e-3;
  double rel_tol = 1e-7;  // relative loss change over `stall_window` iterations
  int stall_window = 10;
  double min_step = 1e-5;      // stop once the step multiplier falls below this
  double loss_floor = 1e-10;   // px^2; an exact match cannot be improved on
  int no_descent_window = 50;

  void validate() const {
    if (!(step_deg > 0.0 && step_mm > 0.0 && fd_step_deg > 0.0 && fd_step_mm > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "optimizer steps must be positive");
    }
    if (!(step_decay > 0.0 && step_decay < 1.0)) throw Error(ErrorCode::InvalidArgument, "step_decay in (0, 1)");
    if (!(step_growth >= 1.0)) throw Error(ErrorCode::InvalidArgument, "step_growth >= 1");
    if (max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters >= 1");
  }
};

struct CameraLoss {
  double mean_sq = 0.0;  // px^2 over jointly valid, unguarded pixels
  int n_valid = 0;
  int n_mismatch = 0;
  int n_union = 0;
};

struct LossReport {
  double total = 0.0;  // px^2
  int n_valid = 0;
  double mismatch_penalty = 0.0;  // px^2
  std::vector<CameraLoss> per_camera;
  bool reliable = true;
};

inline constexpr double kMismatchWeight = 25.0;  // px^2
inline constexpr int kBoundaryGuard = 2;         // px
inline constexpr int kMinJointValid = 200;
inline constexpr double kResidualCap = 2500.0;  // px^2, per pixel

namespace detail {

/// Pixels within `radius` (Chebyshev) of a change of `label`.
inline Mask near_label_change(const Image<std::uint8_t>& label, int radius) {
  const int w = label.width();
  const int h = label.height();
  Mask edge(w, h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto l = label(x, y);
      if ((x + 1 < w && label(x + 1, y) != l) || (y + 1 < h && label(x, y + 1) != l)) {
        edge(x, y) = 1;
        if (x + 1 < w && label(x + 1, y) != l) edge(x + 1, y) = 1;
        if (y + 1 < h && label(x, y + 1) != l) edge(x, y + 1) = 1;
      }
    }
  }
  Mask out(w, h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!edge(x, y)) continue;
      for (int yy = std::max(0, y - radius); yy <= std::min(h - 1, y + radius); ++yy)
        for (int xx = std::max(0, x - radius); xx <= std::min(w - 1, x + radius); ++xx) out(xx, yy) = 1;
    }
  }
  return out;
}

/// Labels piecewise-smooth patches of a correspondence map: invalid pixels are
/// 0, and a jump far above the map's typical neighbor step (a cornea/sclera
/// seam) separates labels 1 and 2 along the jump.
inline Image<std::uint8_t> discontinuity_labels(const CorrespondenceMap& map) {
  const int w = map.width();
  const int h = map.height();
  std::vector<double> steps;
  auto step = [&](int x0, int y0, int x1, int y1) {
    const std::size_t a = map.valid.index(x0, y0);
    const std::size_t b = map.valid.index(x1, y1);
    return std::hypot(map.u[a] - map.u[b], map.v[a] - map.v[b]);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x)
      if (map.is_valid(x, y) && map.is_valid(x + 1, y)) steps.push_back(step(x, y, x + 1, y));
  Image<std::uint8_t> label(w, h, 0);
  for (std::size_t i = 0; i < label.size(); ++i) label[i] = map.valid[i] ? 1 : 0;
  if (steps.empty()) return label;
  std::nth_element(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(steps.size() / 2), steps.end());
  const double jump = std::max(5.0, 4.0 * steps[steps.size() / 2]);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!map.is_valid(x, y)) continue;
      if ((x + 1 < w && map.is_valid(x + 1, y) && step(x, y, x + 1, y) > jump) ||
          (y + 1 < h && map.is_valid(x, y + 1) && step(x, y, x, y + 1) > jump)) {
        label(x, y) = 2;
      }
    }
  }
  return label;
}

inline void require_measured(std::span<const CorrespondenceMap> measured, const SceneConfig& scene) {
  if (measured.size() != scene.cameras.size()) {
    throw Error(ErrorCode::InvalidArgument, "need one measured map per configured camera");
  }
  for (std::size_t c = 0; c < measured.size(); ++c) {
    if (measured[c].width() != scene.cameras[c].width() || measured[c].height() != scene.cameras[c].height()) {
      throw Error(ErrorCode::InvalidArgument, "measured map size does not match camera " + std::to_string(c));
    }
  }
}

/// Guard bands of a measured map; fixed for the whole descent.
inline std::vector<Mask> measured_guards(std::span<const CorrespondenceMap> measured) {
  std::vector<Mask> guards;
  for (const auto& m : measured) guards.push_back(near_label_change(discontinuity_labels(m), kBoundaryGuard));
  return guards;
}

/// Screen-plane coordinates (not clipped to the panel) of the reflection off
/// the front of a sphere; none on a miss or a reflection away from the plane.
inline std::optional<std::array<double, 2>> sphere_reflection(const Ray& ray, const Vec3& center, double radius,
                                                              const ScreenModel& screen) {
  const auto roots = ray_sphere_roots(ray, center, radius);
  if (!roots) return std::nullopt;
  const double t = roots->first > kGeomEps ? roots->first : roots->second;
  if (!(t > kGeomEps)) return std::nullopt;
  const Vec3 p = ray.at(t);
  const UnitVec3 r = reflect(ray.dir, UnitVec3::normalize(p - center));
  const double denom = r.dot(screen.normal());
  if (std::abs(denom) < kGeomEps) return std::nullopt;
  const double s = (screen.pose.translation - p).dot(screen.normal()) / denom;
  if (!(s > kGeomEps)) return std::nullopt;
  const auto [u, v] = screen.to_pixel(p + s * r.vec());
  return std::array<double, 2>{u, v};
}

/// `residuals`, when given, receives (du, dv) per evaluated pixel in a fixed
/// order; a pixel at the residual cap contributes a constant.
inline LossReport correspondence_loss_guarded(const EyeParamVector& params, std::span<const CorrespondenceMap> measured,
                                              std::span<const Mask> guards, const SceneConfig& scene,
                                              std::vector<double>* residuals = nullptr) {
  SceneConfig sim_scene = scene;
  sim_scene.eye = materialize(params, scene.eye);
  const EyeModel& eye = sim_scene.eye;
  const Vec3 cornea_center = eye.cornea_center();
  LossReport report;
  double sum_sq = 0.0;
  long n_eval = 0;
  long n_mismatch = 0;
  long n_union = 0;
  for (std::size_t c = 0; c < scene.cameras.size(); ++c) {
    const auto& cam = scene.cameras[c];
    const CorrespondenceMap sim = render_correspondence(sim_scene, c);
    const auto& meas = measured[c];
    CameraLoss cam_loss;
    double cam_sq = 0.0;
    int cam_eval = 0;
    for (int y = 0; y < meas.height(); ++y) {
      for (int x = 0; x < meas.width(); ++x) {
        const std::size_t i = meas.valid.index(x, y);
        const bool vm = meas.valid[i] != 0;
        const bool vs = sim.valid[i] != 0;
        if (vm || vs) ++cam_loss.n_union;
        if (vm != vs && !guards[c][i]) ++cam_loss.n_mismatch;
        if (!vm || guards[c][i]) continue;
        if (vs) ++cam_loss.n_valid;
        // Each measured pixel is explained by whichever sphere fits it better,
        // which keeps the residual continuous as the seam and outline move.
        const Ray ray = cam.pixel_ray(x, y);
        double best = kResidualCap;
        std::array<double, 2> best_d{std::sqrt(kResidualCap), 0.0};
        for (const auto& hyp : {sphere_reflection(ray, cornea_center, eye.cornea_radius, scene.screen),
                                sphere_reflection(ray, eye.sclera_center, eye.sclera_radius, scene.screen)}) {
          if (!hyp) continue;
          const double du = meas.u[i] - (*hyp)[0];
          const double dv = meas.v[i] - (*hyp)[1];
          if (du * du + dv * dv < best) {
            best = du * du + dv * dv;
            best_d = {du, dv};
          }
        }
        if (residuals) residuals->insert(residuals->end(), best_d.begin(), best_d.end());
        cam_sq += best;
        ++cam_eval;
      }
    }
    cam_loss.mean_sq = cam_eval > 0 ? cam_sq / cam_eval : 0.0;
    sum_sq += cam_sq;
    n_eval += cam_eval;
    n_mismatch += cam_loss.n_mismatch;
    n_union += cam_loss.n_union;
    report.n_valid += cam_loss.n_valid;
    report.per_camera.push_back(cam_loss);
  }
  report.mismatch_penalty = n_union > 0 ? kMismatchWeight * static_cast<double>(n_mismatch) / n_union : 0.0;
  report.total = (n_eval > 0 ? sum_sq / n_eval : 0.0) + report.mismatch_penalty;
  report.reliable = report.n_valid >= kMinJointValid;
  return report;
}

inline LossReport checked(LossReport r) {
  if (!r.reliable) {
    throw Error(ErrorCode::UnreliableLoss, "only " + std::to_string(r.n_valid) + " jointly valid pixels");
  }
  return r;
}

struct Probe {
  std::vector<double> gradient;  // central differences of the loss
  Eigen::MatrixXd jacobian;      // of the stacked residuals, when requested
};

inline Probe probe_guarded(const EyeParamVector& params, std::span<const CorrespondenceMap> measured,
                           std::span<const Mask> guards, const SceneConfig& scene, const OptConfig& config,
                           bool with_jacobian) {
  std::vector<int> idx;
  for (int i = 0; i < kNumEyeParams; ++i)
    if (params.active[i]) idx.push_back(i);
  std::vector<double> loss(2 * idx.size());
  std::vector<std::vector<double>> res(with_jacobian ? 2 * idx.size() : 0);
  parallel_for(loss.size(), [&](std::size_t k) {
    const int i = idx[k / 2];
    const double h = is_angle(i) ? config.fd_step_deg : config.fd_step_mm;
    EyeParamVector p = params;
    p.values[i] += (k % 2 == 0) ? h : -h;
    loss[k] = checked(correspondence_loss_guarded(p, measured, guards, scene, with_jacobian ? &res[k] : nullptr)).total;
  });
  Probe out;
  out.gradient.resize(idx.size());
  if (with_jacobian) out.jacobian.resize(static_cast<Eigen::Index>(res[0].size()), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double h = is_angle(idx[k]) ? config.fd_step_deg : config.fd_step_mm;
    out.gradient[k] = (loss[2 * k] - loss[2 * k + 1]) / (2.0 * h);
    if (!with_jacobian) continue;
    for (std::size_t r = 0; r < res[0].size(); ++r) {
      out.jacobian(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
          (res[2 * k][r] - res[2 * k + 1][r]) / (2.0 * h);
    }
  }
  return out;
}

}  // namespace detail

/// Mean squared screen-coordinate mismatch over jointly valid pixels away from
/// validity and region boundaries, plus a penalty on pixels valid in only one
/// map. Throws UnreliableLoss below 200 jointly valid pixels.
inline LossReport correspondence_loss(const EyeParamVector& params, std::span<const CorrespondenceMap> measured,
                                      const SceneConfig& scene) {
  detail::require_measured(measured, scene);
  const auto guards = detail::measured_guards(measured);
  return detail::checked(detail::correspondence_loss_guarded(params, measured, guards, scene));
}

/// Central finite differences over the active parameters, in px^2 per degree
/// or per mm. No analytic path is implemented; AnalyticIfAvailable falls back
/// to finite differences.
inline std::vector<double> loss_gradient(const EyeParamVector& params, std::span<const CorrespondenceMap> measured,
                                         const SceneConfig& scene, const OptConfig& config) {
  detail::require_measured(measured, scene);
  const auto guards = detail::measured_guards(measured);
  detail::checked(detail::correspondence_loss_guarded(params, measured, guards, scene));
  return detail::probe_guarded(params, measured, guards, scene, config, false).gradient;
}

struct TraceRow {
  int iter = 0;
  double loss = 0.0;
  double step = 0.0;
  bool accepted = false;
  EyeParamVector params;
};

struct OptimizeResult {
  EyeParamVector params;
  GazeEstimate gaze;
  std::vector<TraceRow> trace;
  LossReport final_loss;
};

/// Momentum descent with backtracking. Each proposal moves along the
/// preconditioned negative gradient, capped per parameter at the current step
/// (initially 0.5 deg / 0.5 mm), plus momentum; an increase halves the step and
/// clears the momentum, an accepted move lets it grow back.
inline OptimizeResult optimize_gaze(const EyeParamVector& init, std::span<const CorrespondenceMap> measured,
                                    const SceneConfig& scene, const OptConfig& config) {
  config.validate();
  detail::require_measured(measured, scene);
  if (init.active_count() < 1) throw Error(ErrorCode::InvalidArgument, "no active parameters");
  const auto guards = detail::measured_guards(measured);
  auto loss_at = [&](const EyeParamVector& p) {
    return detail::checked(detail::correspondence_loss_guarded(p, measured, guards, scene));
  };

  std::vector<int> idx;
  for (int i = 0; i < kNumEyeParams; ++i)
    if (init.active[i]) idx.push_back(i);
  std::vector<double> base(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) base[k] = is_angle(idx[k]) ? config.step_deg : config.step_mm;

  OptimizeResult result;
  EyeParamVector x = project_to_bounds(init);
  LossReport lx = loss_at(x);
  double scale = 1.0;
  std::vector<double> velocity(idx.size(), 0.0);
  std::vector<double> history{lx.total};
  int accepted = 0;
  const Eigen::Index n = static_cast<Eigen::Index>(idx.size());

  for (int iter = 1; iter <= config.max_iters; ++iter) {
    if (lx.total <= config.loss_floor) break;
    const auto probe = detail::probe_guarded(x, measured, guards, scene, config, true);
    const Eigen::Map<const Eigen::VectorXd> g(probe.gradient.data(), n);
    if (g.squaredNorm() == 0.0) break;
    // Rotation and translation are strongly coupled (the cornea sphere mostly
    // pins its own center), so the gradient is preconditioned by the
    // Gauss-Newton metric of the per-pixel residuals.
    Eigen::MatrixXd metric = probe.jacobian.transpose() * probe.jacobian;
    metric *= 2.0 / std::max<double>(1.0, static_cast<double>(probe.jacobian.rows()) / 2.0);
    metric.diagonal().array() += 1e-9 * std::max(1.0, metric.diagonal().maxCoeff());
    Eigen::VectorXd dir = -metric.ldlt().solve(g);
    if (!dir.allFinite() || dir.dot(g) >= 0.0) dir = -g;
    double reach = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) reach = std::max(reach, std::abs(dir(k)) / base[k]);
    if (reach > scale) dir *= scale / reach;

    EyeParamVector proposal = x;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      proposal.values[idx[k]] += dir(static_cast<Eigen::Index>(k)) + config.momentum * velocity[k];
    }
    proposal = project_to_bounds(proposal);
    const LossReport lp = loss_at(proposal);
    const bool ok = lp.total < lx.total;
    if (ok) {
      for (std::size_t k = 0; k < idx.size(); ++k) velocity[k] = proposal.values[idx[k]] - x.values[idx[k]];
      x = proposal;
      lx = lp;
      ++accepted;
      scale = std::min(1.0, scale * config.step_growth);
    } else {
      scale *= config.step_decay;
      std::fill(velocity.begin(), velocity.end(), 0.0);
    }
    result.trace.push_back(TraceRow{iter, lx.total, scale, ok, x});
    history.push_back(lx.total);

    if (accepted == 0 && iter >= config.no_descent_window) {
      throw Error(ErrorCode::NoDescent, "no accepted step in the first " + std::to_string(iter) + " proposals");
    }
    if (scale < config.min_step) break;
    if (static_cast<int>(history.size()) > config.stall_window) {
      const double old = history[history.size() - 1 - config.stall_window];
      if (std::abs(old - lx.total) <= config.rel_tol * std::max(old, 1e-300) && accepted > 0) break;
    }
  }

  const EyeModel eye = materialize(x, scene.eye);
  result.params = x;
  result.final_loss = lx;
  result.gaze.direction = eye.optical_axis;
  result.gaze.cornea_center = eye.cornea_center();
  result.gaze.sclera_center = eye.sclera_center;
  result.gaze.n_cornea_inliers = result.gaze.n_sclera_inliers = lx.n_valid;
  result.gaze.rms_cornea = result.gaze.rms_sclera = std::sqrt(std::max(0.0, lx.total - lx.mismatch_penalty));
  result.gaze.method = GazeMethod::Optimize;
  return result;
}

/// Zero rotation, nominal shape (frozen) and a translation from the shift of
/// the valid-pixel centroid against the nominal eye's render, back-projected
/// at the nominal eye distance and clamped to +-3 mm.
inline EyeParamVector init_guess(std::span<const CorrespondenceMap> measured, const SceneConfig& scene) {
  detail::require_measured(measured, scene);
  EyeParamVector p = EyeParamVector::from_eye(scene.eye);
  p.freeze_shape();
  Vec3 shift = Vec3::Zero();
  int used = 0;
  for (std::size_t c = 0; c < measured.size(); ++c) {
    auto centroid = [](const CorrespondenceMap& m) -> std::optional<std::array<double, 2>> {
      double sx = 0.0, sy = 0.0;
      std::size_t n = 0;
      for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
          if (m.is_valid(x, y)) {
            sx += x;
            sy += y;
            ++n;
          }
      if (n == 0) return std::nullopt;
      return std::array<double, 2>{sx / n, sy / n};
    };
    const auto cm = centroid(measured[c]);
    if (!cm) continue;
    const auto cn = centroid(render_correspondence(scene, c));
    if (!cn) continue;
    const auto& cam = scene.cameras[c];
    const double depth = (cam.center() - scene.eye.sclera_center).norm();
    shift += cam.pixel_ray((*cm)[0], (*cm)[1]).at(depth) - cam.pixel_ray((*cn)[0], (*cn)[1]).at(depth);
    ++used;
  }
  bool any_valid = false;
  for (const auto& m : measured) any_valid = any_valid || m.valid_count() > 0;
  if (!any_valid) throw Error(ErrorCode::EmptyMap, "measured maps have no valid pixels");
  if (used > 0) shift /= used;
  for (int i = 0; i < 3; ++i) p.values[2 + i] = std::clamp(shift(i), -3.0, 3.0);
  return project_to_bounds(p);
}

/// Mean squared intensity difference between measured frames (one per camera)
/// and frames rendered from the simulated eye, over simulated-valid pixels
/// away from validity and region boundaries.
inline LossReport image_loss(const EyeParamVector& params, std::span<const Frame> frames, const PatternSpec& pattern,
                             const SceneConfig& scene, int shift_index = 0) {
  if (frames.size() != scene.cameras.size()) throw Error(ErrorCode::InvalidArgument, "need one frame per camera");
  SceneConfig sim_scene = scene;
  sim_scene.eye = materialize(params, scene.eye);
  LossReport report;
  double sum_sq = 0.0;
  for (std::size_t c = 0; c < scene.cameras.size(); ++c) {
    const RenderTruth sim = render_truth(sim_scene, c);
    Image<std::uint8_t> label = sim.region;
    for (std::size_t i = 0; i < label.size(); ++i)
      if (!sim.map.valid[i]) label[i] = 0;
    const Mask guard = detail::near_label_change(label, kBoundaryGuard);
    const Frame rendered = render_frame(sim.map, pattern, shift_index, IntensityNoise{});
    CameraLoss cam;
    double cam_sq = 0.0;
    for (std::size_t i = 0; i < label.size(); ++i) {
      if (!sim.map.valid[i] || guard[i]) continue;
      const double d = frames[c][i] - rendered[i];
      cam_sq += d * d;
      ++cam.n_valid;
    }
    cam.mean_sq = cam.n_valid > 0 ? cam_sq / cam.n_valid : 0.0;
    sum_sq += cam_sq;
    report.n_valid += cam.n_valid;
    report.per_camera.push_back(cam);
  }
  report.total = report.n_valid > 0 ? sum_sq / report.n_valid : 0.0;
  report.reliable = report.n_valid >= kMinJointValid;
  return detail::checked(report);
}

inline constexpr const char* kTraceHeader = "iter,loss,step,azimuth,elevation,tx,ty,tz";

inline void write_trace(const std::string& path, std::span<const TraceRow> trace) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out << kTraceHeader << "\n";
  char buf[512];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iter, r.loss, r.step,
                  r.params[EyeParam::Azimuth], r.params[EyeParam::Elevation], r.params[EyeParam::Tx],
                  r.params[EyeParam::Ty], r.params[EyeParam::Tz]);
    out << buf;
  }
}

}  // namespace deflect_gaze
