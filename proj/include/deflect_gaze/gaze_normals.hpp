#pragma once

// Gaze from a reconstructed normal field: normals traced back into the eye
// meet at the cornea and sclera centers; the line through both is the
// optical axis.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deflect_gaze/geometry.hpp"
#include "deflect_gaze/stereo.hpp"

namespace deflect_gaze {

enum class GazeMethod : std::uint8_t { TwoCenter, AxisFit, Optimize };

inline const char* to_string(GazeMethod m) {
  switch (m) {
    case GazeMethod::TwoCenter: return "two-center";
    case GazeMethod::AxisFit: return "axis-fit";
    case GazeMethod::Optimize: return "optimize";
  }
  return "unknown";
}

struct GazeEstimate {
  UnitVec3 direction;
  Vec3 cornea_center = Vec3::Zero();
  Vec3 sclera_center = Vec3::Zero();
  int n_cornea_inliers = 0;
  int n_sclera_inliers = 0;
  double rms_cornea = 0.0;
  double rms_sclera = 0.0;
  GazeMethod method = GazeMethod::TwoCenter;
};

struct ClusterParams {
  int ransac_iters = 500;
  double inlier_tol = 0.3;  // mm
  int min_inliers = 50;
  std::uint64_t rng_seed = 1;

  void validate() const {
    if (!(inlier_tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "inlier_tol must be positive");
    if (ransac_iters < 10) throw Error(ErrorCode::InvalidArgument, "ransac_iters must be >= 10");
    if (min_inliers < 3) throw Error(ErrorCode::InvalidArgument, "min_inliers must be >= 3");
  }
};

struct TwoCenterResult {
  Vec3 center_a;
  Vec3 center_b;
  std::vector<std::uint8_t> labels;  // 0 -> center_a, 1 -> center_b
  double rms_a = 0.0;
  double rms_b = 0.0;
};

inline std::vector<Line3> backtrace_lines(const NormalField& field) {
  if (field.samples.empty()) throw Error(ErrorCode::EmptyField, "normal field is empty");
  std::vector<Line3> lines;
  lines.reserve(field.samples.size());
  for (const auto& s : field.samples) lines.push_back(Line3{s.point, s.normal});
  return lines;
}

namespace detail {

struct RansacCenter {
  Vec3 center;
  std::vector<std::size_t> inliers;  // indices into the candidate list
};

/// Best-supported common point among `candidates`, refined by least squares
/// over its inliers. Each iteration draws from its own substream so the
/// result is independent of evaluation order.
inline std::optional<RansacCenter> ransac_center(std::span<const Line3> all, std::span<const std::size_t> candidates,
                                                 const ClusterParams& params, std::uint64_t stream) {
  if (candidates.size() < 3) return std::nullopt;
  std::optional<Vec3> best;
  std::size_t best_count = 0;
  for (int it = 0; it < params.ransac_iters; ++it) {
    auto rng = pixel_rng(params.rng_seed, stream, static_cast<std::uint64_t>(it));
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    const std::size_t i = pick(rng);
    std::size_t j = pick(rng);
    std::size_t k = pick(rng);
    if (i == j || j == k || i == k) continue;
    const Line3 sample[3] = {all[candidates[i]], all[candidates[j]], all[candidates[k]]};
    Vec3 c;
    try {
      c = least_squares_point(sample).point;
    } catch (const Error&) {
      continue;
    }
    std::size_t count = 0;
    for (const auto idx : candidates) count += all[idx].distance_to(c) < params.inlier_tol;
    if (count > best_count) {
      best_count = count;
      best = c;
    }
  }
  if (!best) return std::nullopt;

  RansacCenter out{*best, {}};
  // Refine, then re-collect inliers around the refined center.
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<std::size_t> inl;
    std::vector<Line3> inl_lines;
    for (std::size_t n = 0; n < candidates.size(); ++n) {
      if (all[candidates[n]].distance_to(out.center) < params.inlier_tol) {
        inl.push_back(n);
        inl_lines.push_back(all[candidates[n]]);
      }
    }
    out.inliers = std::move(inl);
    if (inl_lines.size() < 3) break;
    try {
      out.center = least_squares_point(inl_lines).point;
    } catch (const Error&) {
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Sequential RANSAC for two common points, followed by a nearest-center
/// reassignment of every line and a joint re-solve.
inline TwoCenterResult two_center_cluster(std::span<const Line3> lines, const ClusterParams& params) {
  params.validate();
  if (lines.size() < 2 * static_cast<std::size_t>(params.min_inliers)) {
    throw Error(ErrorCode::InsufficientLines,
                "need >= " + std::to_string(2 * params.min_inliers) + " lines, got " + std::to_string(lines.size()));
  }
  std::vector<std::size_t> remaining(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) remaining[i] = i;

  const auto first = detail::ransac_center(lines, remaining, params, 1);
  if (!first || first->inliers.size() < static_cast<std::size_t>(params.min_inliers)) {
    throw Error(ErrorCode::InsufficientLines, "no center with enough support");
  }
  std::vector<std::uint8_t> taken(lines.size(), 0);
  for (const auto n : first->inliers) taken[remaining[n]] = 1;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < lines.size(); ++i)
    if (!taken[i]) rest.push_back(i);
  if (rest.size() < static_cast<std::size_t>(params.min_inliers)) {
    throw Error(ErrorCode::SecondCenterNotFound, "only " + std::to_string(rest.size()) + " lines left");
  }
  const auto second = detail::ransac_center(lines, rest, params, 2);
  if (!second || second->inliers.size() < static_cast<std::size_t>(params.min_inliers)) {
    throw Error(ErrorCode::SecondCenterNotFound, "second center lacks support");
  }

  TwoCenterResult out{first->center, second->center, std::vector<std::uint8_t>(lines.size(), 0), 0.0, 0.0};
  for (int polish = 0; polish < 3; ++polish) {
    std::vector<Line3> group_a, group_b;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const bool to_b = lines[i].distance_to(out.center_b) < lines[i].distance_to(out.center_a);
      out.labels[i] = to_b ? 1 : 0;
      (to_b ? group_b : group_a).push_back(lines[i]);
    }
    if (group_a.size() < 2 || group_b.size() < 2) {
      throw Error(ErrorCode::SecondCenterNotFound, "reassignment emptied a cluster");
    }
    const auto fa = least_squares_point(group_a);
    const auto fb = least_squares_point(group_b);
    out.center_a = fa.point;
    out.center_b = fb.point;
    out.rms_a = fa.rms_dist;
    out.rms_b = fb.rms_dist;
  }
  return out;
}

struct CorneaSclera {
  Vec3 cornea_center;
  Vec3 sclera_center;
  double cornea_radius = 0.0;  // mean base-point distance, a radius estimate
  double sclera_radius = 0.0;
  bool swapped = false;  // true when cluster b is the cornea
};

/// The cluster whose surface points sit closer to their center is the cornea.
inline CorneaSclera identify_cornea(const Vec3& center_a, const Vec3& center_b, std::span<const Line3> lines,
                                    std::span<const std::uint8_t> labels) {
  if (lines.size() != labels.size()) throw Error(ErrorCode::InvalidArgument, "labels do not match lines");
  double sum[2] = {0.0, 0.0};
  std::size_t count[2] = {0, 0};
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int l = labels[i] ? 1 : 0;
    sum[l] += (lines[i].point - (l ? center_b : center_a)).norm();
    ++count[l];
  }
  if (count[0] == 0 || count[1] == 0) throw Error(ErrorCode::InvalidArgument, "a cluster is empty");
  const double ra = sum[0] / count[0];
  const double rb = sum[1] / count[1];
  if (std::abs(ra - rb) < 0.1 * std::max(ra, rb)) {
    throw Error(ErrorCode::AmbiguousRadii, "cluster radii differ by less than 10%");
  }
  if (ra < rb) return {center_a, center_b, ra, rb, false};
  return {center_b, center_a, rb, ra, true};
}

inline UnitVec3 gaze_from_centers(const Vec3& cornea_center, const Vec3& sclera_center) {
  const Vec3 d = cornea_center - sclera_center;
  if (d.norm() < 0.5) throw Error(ErrorCode::CentersTooClose, "cornea and sclera centers are < 0.5 mm apart");
  return UnitVec3::normalize(d);
}

/// Full two-center estimate: cluster, identify the cornea, connect the centers.
inline GazeEstimate gaze_two_center(std::span<const Line3> lines, const ClusterParams& params) {
  const auto clusters = two_center_cluster(lines, params);
  const auto ids = identify_cornea(clusters.center_a, clusters.center_b, lines, clusters.labels);
  GazeEstimate g;
  g.direction = gaze_from_centers(ids.cornea_center, ids.sclera_center);
  g.cornea_center = ids.cornea_center;
  g.sclera_center = ids.sclera_center;
  int n_b = 0;
  for (auto l : clusters.labels) n_b += l;
  const int n_a = static_cast<int>(clusters.labels.size()) - n_b;
  g.n_cornea_inliers = ids.swapped ? n_b : n_a;
  g.n_sclera_inliers = ids.swapped ? n_a : n_b;
  g.rms_cornea = ids.swapped ? clusters.rms_b : clusters.rms_a;
  g.rms_sclera = ids.swapped ? clusters.rms_a : clusters.rms_b;
  g.method = GazeMethod::TwoCenter;
  return g;
}

/// Symmetry-axis estimate, oriented from the axis anchor toward the mean
/// surface point (out of the eye).
inline GazeEstimate gaze_axis_fit(std::span<const Line3> lines) {
  const Line3 axis = best_fit_axis(lines);
  Vec3 mean_point = Vec3::Zero();
  for (const auto& l : lines) mean_point += l.point;
  mean_point /= static_cast<double>(lines.size());
  GazeEstimate g;
  g.direction = (mean_point - axis.point).dot(axis.dir.vec()) >= 0.0 ? axis.dir : -axis.dir;
  g.cornea_center = axis.point;
  g.sclera_center = axis.point;
  double sum_sq = 0.0;
  for (const auto& l : lines) {
    const double d = detail::line_line_distance(axis.point, axis.dir.vec(), l);
    sum_sq += d * d;
  }
  g.rms_cornea = g.rms_sclera = std::sqrt(sum_sq / static_cast<double>(lines.size()));
  g.method = GazeMethod::AxisFit;
  return g;
}

/// Signed angle (degrees) from g_ref to g_a about rotation_axis.
inline double relative_gaze_angle(const UnitVec3& g_a, const UnitVec3& g_ref, const UnitVec3& rotation_axis) {
  const Vec3& a = g_a.vec();
  const Vec3& r = g_ref.vec();
  const Vec3& ax = rotation_axis.vec();
  return rad2deg(std::atan2(r.cross(a).dot(ax), r.dot(a) - r.dot(ax) * a.dot(ax)));
}

inline constexpr const char* kGazeCsvHeader =
    "method,dx,dy,dz,cornea_x,cornea_y,cornea_z,sclera_x,sclera_y,sclera_z,n_cornea,n_sclera,rms_cornea,rms_sclera";

inline std::string gaze_csv_row(const GazeEstimate& g) {
  char buf[640];
  std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,%.17g,%.17g",
                to_string(g.method), g.direction.x(), g.direction.y(), g.direction.z(), g.cornea_center.x(),
                g.cornea_center.y(), g.cornea_center.z(), g.sclera_center.x(), g.sclera_center.y(),
                g.sclera_center.z(), g.n_cornea_inliers, g.n_sclera_inliers, g.rms_cornea, g.rms_sclera);
  return buf;
}

inline std::string gaze_pretty(const GazeEstimate& g) {
  char buf[640];
  std::snprintf(buf, sizeof buf,
                "method         %s\n"
                "gaze direction (%.6f, %.6f, %.6f)\n"
                "cornea center  (%.4f, %.4f, %.4f) mm  inliers %d  rms %.4f mm\n"
                "sclera center  (%.4f, %.4f, %.4f) mm  inliers %d  rms %.4f mm\n",
                to_string(g.method), g.direction.x(), g.direction.y(), g.direction.z(), g.cornea_center.x(),
                g.cornea_center.y(), g.cornea_center.z(), g.n_cornea_inliers, g.rms_cornea, g.sclera_center.x(),
                g.sclera_center.y(), g.sclera_center.z(), g.n_sclera_inliers, g.rms_sclera);
  return buf;
}

}  // namespace deflect_gaze
