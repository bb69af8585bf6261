#pragma once

// Vector, ray and line primitives plus the reflection law and line-bundle
// solvers shared by every stage of the pipeline. Lengths are millimeters,
// public angles are degrees.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "deflect_gaze/error.hpp"

namespace deflect_gaze {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kGeomEps = 1e-9;

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Unit-length direction. Construction normalizes; the raw vector is never
/// exposed mutably so the invariant cannot be broken after the fact.
class UnitVec3 {
 public:
  UnitVec3() : v_(0.0, 0.0, 1.0) {}

  static UnitVec3 normalize(const Vec3& v) {
    const double n = v.norm();
    if (!(n > kGeomEps) || !std::isfinite(n)) {
      throw Error(ErrorCode::InvalidArgument, "cannot normalize a zero or non-finite vector");
    }
    return UnitVec3(v / n);
  }

  /// For vectors that are unit by construction (rotations of unit vectors).
  static UnitVec3 assume_unit(const Vec3& v) { return UnitVec3(v); }

  const Vec3& vec() const { return v_; }
  operator const Vec3&() const { return v_; }  // NOLINT(google-explicit-constructor)
  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }
  double dot(const Vec3& o) const { return v_.dot(o); }
  UnitVec3 operator-() const { return UnitVec3(-v_); }

 private:
  explicit UnitVec3(const Vec3& v) : v_(v) {}
  Vec3 v_;
};

struct Ray {
  Vec3 origin;
  UnitVec3 dir;

  Vec3 at(double t) const { return origin + t * dir.vec(); }
};

/// Rigid transform mapping local coordinates into the parent frame.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_dir(const Vec3& d) const { return rotation * d; }
  Vec3 inverse_apply(const Vec3& p) const { return rotation.transpose() * (p - translation); }
  Vec3 inverse_apply_dir(const Vec3& d) const { return rotation.transpose() * d; }

  bool is_valid(double tol = 1e-9) const {
    return (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol && translation.allFinite();
  }
};

/// Undirected line; every operation is invariant under dir -> -dir.
struct Line3 {
  Vec3 point;
  UnitVec3 dir;

  double distance_to(const Vec3& p) const { return (p - point).cross(dir.vec()).norm(); }
};

/// Rotation by `angle_rad` about `axis` (right-handed).
inline Mat3 axis_angle(const UnitVec3& axis, double angle_rad) {
  return Eigen::AngleAxisd(angle_rad, axis.vec()).toRotationMatrix();
}

/// Mirror reflection of an incident direction `d` (travelling toward the
/// surface) about the surface normal `n`.
inline UnitVec3 reflect(const UnitVec3& d, const UnitVec3& n) {
  return UnitVec3::assume_unit(d.vec() - 2.0 * d.dot(n) * n.vec());
}

/// Deflectometric normal: bisector of the directions from a surface point to
/// the camera and to the screen point it reflects.
inline UnitVec3 half_vector_normal(const UnitVec3& to_camera, const UnitVec3& to_screen) {
  const Vec3 sum = to_camera.vec() + to_screen.vec();
  const double n = sum.norm();
  if (n < kGeomEps) {
    throw Error(ErrorCode::DegenerateBisector, "camera and screen directions are opposite");
  }
  return UnitVec3::assume_unit(sum / n);
}

/// Smallest t > 1e-9 with |ray(t) - center| = radius.
inline std::optional<double> intersect_ray_sphere(const Ray& ray, const Vec3& center, double radius) {
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "sphere radius must be positive");
  const Vec3 oc = ray.origin - center;
  const double b = oc.dot(ray.dir.vec());
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  // Stable root pair.
  const double q = (b > 0.0) ? -(b + s) : -(b - s);
  double t0 = q;
  double t1 = (q != 0.0) ? c / q : -b;
  if (t0 > t1) std::swap(t0, t1);
  if (t0 > kGeomEps) return t0;
  if (t1 > kGeomEps) return t1;
  return std::nullopt;
}

/// Both intersection parameters (t0 <= t1), regardless of sign.
inline std::optional<std::pair<double, double>> ray_sphere_roots(const Ray& ray, const Vec3& center,
                                                                 double radius) {
  const Vec3 oc = ray.origin - center;
  const double b = oc.dot(ray.dir.vec());
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  const double q = (b > 0.0) ? -(b + s) : -(b - s);
  double t0 = q;
  double t1 = (q != 0.0) ? c / q : -b;
  if (t0 > t1) std::swap(t0, t1);
  return std::make_pair(t0, t1);
}

/// Angle between unit vectors in degrees, in [0, 180].
inline double angle_between(const UnitVec3& u, const UnitVec3& v) {
  // atan2 form keeps full precision for nearly parallel vectors.
  return rad2deg(std::atan2(u.vec().cross(v.vec()).norm(), u.dot(v)));
}

struct PointFit {
  Vec3 point;
  double rms_dist;
};

/// Point minimizing the summed squared distance to all lines (closed-form
/// 3x3 normal equations).
inline PointFit least_squares_point(std::span<const Line3> lines) {
  if (lines.size() < 2) throw Error(ErrorCode::DegenerateBundle, "need at least two lines");
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (const auto& l : lines) {
    const Mat3 proj = Mat3::Identity() - l.dir.vec() * l.dir.vec().transpose();
    a += proj;
    b += proj * l.point;
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(a, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  if (!(ev(0) > kGeomEps * ev(2))) {
    throw Error(ErrorCode::DegenerateBundle, "line bundle is (nearly) parallel");
  }
  const Vec3 x = a.ldlt().solve(b);
  double sum_sq = 0.0;
  for (const auto& l : lines) {
    const double d = l.distance_to(x);
    sum_sq += d * d;
  }
  return {x, std::sqrt(sum_sq / static_cast<double>(lines.size()))};
}

namespace detail {

/// Midpoint of the closest approach between two non-parallel lines.
inline std::optional<Vec3> closest_approach_midpoint(const Line3& l1, const Line3& l2) {
  const Vec3& d1 = l1.dir.vec();
  const Vec3& d2 = l2.dir.vec();
  const Vec3 w = l1.point - l2.point;
  const double b = d1.dot(d2);
  const double denom = 1.0 - b * b;
  if (denom < kGeomEps) return std::nullopt;
  const double d = d1.dot(w);
  const double e = d2.dot(w);
  const double s = (b * e - d) / denom;
  const double t = (e - b * d) / denom;
  return 0.5 * ((l1.point + s * d1) + (l2.point + t * d2));
}

/// Signed line-to-line distance, falling back to point-line distance when the
/// two lines are parallel.
inline double line_line_distance(const Vec3& a, const Vec3& u, const Line3& l) {
  const Vec3 m = l.dir.vec().cross(u);
  const double mn = m.norm();
  if (mn > 1e-6) return (l.point - a).dot(m) / mn;
  return (l.point - a).cross(u).norm();
}

struct AxisResidual {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  AxisResidual(std::span<const Line3> lines, Vec3 a0, Vec3 u0, Vec3 e1, Vec3 e2)
      : lines(lines), a0(std::move(a0)), u0(std::move(u0)), e1(std::move(e1)), e2(std::move(e2)) {}

  int inputs() const { return 4; }
  int values() const { return static_cast<int>(lines.size()); }

  std::pair<Vec3, Vec3> materialize(const Eigen::VectorXd& x) const {
    const Vec3 u = (u0 + x(0) * e1 + x(1) * e2).normalized();
    const Vec3 a = a0 + x(2) * e1 + x(3) * e2;
    return {a, u};
  }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const {
    const auto [a, u] = materialize(x);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      fvec(static_cast<Eigen::Index>(i)) = line_line_distance(a, u, lines[i]);
    }
    return 0;
  }

  std::span<const Line3> lines;
  Vec3 a0, u0, e1, e2;
};

}  // namespace detail

/// Axis shared by the normal lines of a rotationally symmetric surface.
/// Levenberg-Marquardt on the summed squared line-to-line distance, seeded
/// from a total-least-squares line through closest-approach midpoints of up
/// to 2000 line pairs and from the mean line direction.
inline Line3 best_fit_axis(std::span<const Line3> lines) {
  if (lines.size() < 3) throw Error(ErrorCode::DegenerateBundle, "need at least three lines");

  constexpr std::size_t kMaxPairs = 2000;
  const std::size_t n = lines.size();
  const std::size_t total_pairs = n * (n - 1) / 2;

  std::vector<Vec3> mids;
  mids.reserve(std::min(total_pairs, kMaxPairs));
  if (total_pairs <= kMaxPairs) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (auto m = detail::closest_approach_midpoint(lines[i], lines[j])) mids.push_back(*m);
  } else {
    std::mt19937_64 rng(0x5eedULL);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t attempt = 0; attempt < 50 * kMaxPairs && mids.size() < kMaxPairs; ++attempt) {
      const std::size_t i = pick(rng);
      const std::size_t j = pick(rng);
      if (i == j) continue;
      if (auto m = detail::closest_approach_midpoint(lines[i], lines[j])) mids.push_back(*m);
    }
  }
  if (mids.size() < 2) throw Error(ErrorCode::DegenerateBundle, "no non-parallel line pairs");

  Vec3 centroid = Vec3::Zero();
  for (const auto& m : mids) centroid += m;
  centroid /= static_cast<double>(mids.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& m : mids) cov += (m - centroid) * (m - centroid).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const double s1 = std::sqrt(std::max(0.0, eig.eigenvalues()(2)));
  const double s2 = std::sqrt(std::max(0.0, eig.eigenvalues()(1)));
  double scale = 0.0;
  for (const auto& l : lines) scale = std::max(scale, (l.point - centroid).norm());
  // All lines through one point: every axis through it fits equally well.
  if (s1 <= kGeomEps * std::max(1.0, scale) * std::sqrt(static_cast<double>(mids.size()))) {
    throw Error(ErrorCode::DegenerateBundle, "lines share a single point");
  }

  // Seeds: the dominant midpoint direction, and the mean line direction
  // (consistently oriented normals of a surface of revolution average onto
  // its axis).
  std::vector<std::pair<Vec3, Vec3>> seeds;
  if (s1 >= 1.5 * s2) seeds.emplace_back(centroid, eig.eigenvectors().col(2).normalized());
  Vec3 mean_dir = Vec3::Zero();
  for (const auto& l : lines) mean_dir += l.dir.vec();
  mean_dir /= static_cast<double>(n);
  if (mean_dir.norm() > 0.1) {
    Mat3 a = Mat3::Zero();
    Vec3 b = Vec3::Zero();
    for (const auto& l : lines) {
      const Mat3 proj = Mat3::Identity() - l.dir.vec() * l.dir.vec().transpose();
      a += proj;
      b += proj * l.point;
    }
    seeds.emplace_back(a.ldlt().solve(b), mean_dir.normalized());
  }
  if (seeds.empty()) throw Error(ErrorCode::DegenerateBundle, "closest-approach midpoints have no dominant direction");

  double best_cost = std::numeric_limits<double>::infinity();
  Line3 best;
  for (const auto& [a0, u0] : seeds) {
    const Vec3 e1 = u0.unitOrthogonal();
    const Vec3 e2 = u0.cross(e1);
    detail::AxisResidual functor(lines, a0, u0, e1, e2);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
    if (lines.size() >= 4) {
      Eigen::NumericalDiff<detail::AxisResidual, Eigen::Central> numdiff(functor, 1e-7);
      Eigen::LevenbergMarquardt<Eigen::NumericalDiff<detail::AxisResidual, Eigen::Central>> lm(numdiff);
      lm.parameters.xtol = 1e-14;
      lm.parameters.ftol = 1e-14;
      lm.parameters.maxfev = 4000;
      lm.minimize(x);
    }
    Eigen::VectorXd f(static_cast<Eigen::Index>(n));
    functor(x, f);
    const double cost = f.squaredNorm();
    if (!(cost < best_cost)) continue;
    best_cost = cost;
    const auto [a, u] = functor.materialize(x);
    // Report the point closest to the midpoint centroid for a stable anchor.
    best = Line3{a + (centroid - a).dot(u) * u, UnitVec3::normalize(u)};
  }
  return best;
}

}  // namespace deflect_gaze
