#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "deflect_gaze/geometry.hpp"
#include "deflect_gaze/scene.hpp"

using namespace deflect_gaze;

namespace {

UnitVec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  return UnitVec3::normalize(Vec3(g(rng), g(rng), g(rng)));
}

// Independent objective: explicit point-to-line distances.
double sum_sq_dist(const std::vector<Line3>& lines, const Vec3& p) {
  double s = 0.0;
  for (const auto& l : lines) {
    const Vec3 w = p - l.point;
    const Vec3 perp = w - w.dot(l.dir.vec()) * l.dir.vec();
    s += perp.squaredNorm();
  }
  return s;
}

// Exhaustive search on a grid of `step` over the cube [lo, hi]^3.
Vec3 grid_search(const std::vector<Line3>& lines, const Vec3& lo, const Vec3& hi, double step) {
  Vec3 best = lo;
  double best_f = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(std::lround((hi.x() - lo.x()) / step));
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j)
      for (int k = 0; k <= n; ++k) {
        const Vec3 p = lo + step * Vec3(i, j, k);
        const double f = sum_sq_dist(lines, p);
        if (f < best_f) {
          best_f = f;
          best = p;
        }
      }
  return best;
}

}  // namespace

TEST(Reflect, NormalIncidence) {
  const auto r = reflect(UnitVec3::normalize(Vec3(0, 0, -1)), UnitVec3::normalize(Vec3(0, 0, 1)));
  EXPECT_NEAR((r.vec() - Vec3(0, 0, 1)).norm(), 0.0, 1e-15);
}

TEST(Reflect, FortyFiveDegrees) {
  const double h = std::sqrt(0.5);
  const auto r = reflect(UnitVec3::normalize(Vec3(h, 0, -h)), UnitVec3::normalize(Vec3(0, 0, 1)));
  EXPECT_NEAR((r.vec() - Vec3(h, 0, h)).norm(), 0.0, 1e-15);
}

TEST(Reflect, RandomIdentitiesAndInvolution) {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 100000; ++i) {
    const auto d = random_unit(rng);
    const auto n = random_unit(rng);
    const auto r = reflect(d, n);
    ASSERT_NEAR(r.dot(n), -d.dot(n), 1e-12);
    ASSERT_NEAR(r.vec().norm(), 1.0, 1e-12);
    ASSERT_NEAR(d.vec().cross(n.vec()).dot(r.vec()), 0.0, 1e-12);  // coplanar
    const auto back = reflect(-r, n);
    ASSERT_NEAR((back.vec() + d.vec()).norm(), 0.0, 1e-12);
  }
}

TEST(HalfVector, Examples) {
  const auto z = UnitVec3::normalize(Vec3(0, 0, 1));
  EXPECT_NEAR((half_vector_normal(z, z).vec() - z.vec()).norm(), 0.0, 1e-15);
  const auto n = half_vector_normal(UnitVec3::normalize(Vec3(1, 0, 0)), UnitVec3::normalize(Vec3(0, 1, 0)));
  EXPECT_NEAR((n.vec() - Vec3(std::sqrt(0.5), std::sqrt(0.5), 0)).norm(), 0.0, 1e-15);
}

TEST(HalfVector, SymmetricAndReflectionConsistent) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100000; ++i) {
    const auto a = random_unit(rng);
    const auto b = random_unit(rng);
    if ((a.vec() + b.vec()).norm() < 1e-6) continue;
    const auto n1 = half_vector_normal(a, b);
    const auto n2 = half_vector_normal(b, a);
    ASSERT_NEAR((n1.vec() - n2.vec()).norm(), 0.0, 1e-12);
    // Reflecting the incoming view ray about the bisector sends it to the screen.
    const auto r = reflect(-a, n1);
    ASSERT_NEAR((r.vec() - b.vec()).norm(), 0.0, 1e-12);
  }
}

TEST(HalfVector, OppositeDirectionsAreDegenerate) {
  const auto z = UnitVec3::normalize(Vec3(0, 0, 1));
  try {
    half_vector_normal(z, -z);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateBisector);
  }
}

TEST(RaySphere, AxialHitAndMiss) {
  const Ray hit{Vec3(0, 0, -20), UnitVec3::normalize(Vec3(0, 0, 1))};
  ASSERT_TRUE(intersect_ray_sphere(hit, Vec3::Zero(), 12.0).has_value());
  EXPECT_NEAR(*intersect_ray_sphere(hit, Vec3::Zero(), 12.0), 8.0, 1e-12);
  const Ray miss{Vec3(0, 0, -20), UnitVec3::normalize(Vec3(0, 1, 0))};
  EXPECT_FALSE(intersect_ray_sphere(miss, Vec3::Zero(), 12.0).has_value());
}

TEST(RaySphere, InsideOriginTakesExitRoot) {
  const Ray r{Vec3::Zero(), UnitVec3::normalize(Vec3(1, 0, 0))};
  EXPECT_NEAR(*intersect_ray_sphere(r, Vec3::Zero(), 5.0), 5.0, 1e-12);
}

TEST(RaySphere, RandomResidual) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  int hits = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 c(u(rng), u(rng), u(rng));
    const double radius = 1.0 + std::abs(u(rng));
    const Ray ray{Vec3(u(rng), u(rng), u(rng)) * 3.0, random_unit(rng)};
    const auto t = intersect_ray_sphere(ray, c, radius);
    if (!t) continue;
    ++hits;
    ASSERT_GT(*t, 1e-9);
    ASSERT_NEAR((ray.at(*t) - c).norm() - radius, 0.0, 1e-9);
  }
  EXPECT_GT(hits, 100);
}

TEST(LeastSquaresPoint, TwoAxes) {
  const std::vector<Line3> lines{{Vec3(5, 0, 0), UnitVec3::normalize(Vec3(1, 0, 0))},
                                 {Vec3(0, -3, 0), UnitVec3::normalize(Vec3(0, 1, 0))}};
  const auto fit = least_squares_point(lines);
  EXPECT_NEAR(fit.point.norm(), 0.0, 1e-12);
  EXPECT_NEAR(fit.rms_dist, 0.0, 1e-12);
}

TEST(LeastSquaresPoint, SphereNormalsMeetAtCenter) {
  std::mt19937_64 rng(11);
  const Vec3 c(1, 2, 3);
  std::vector<Line3> lines;
  for (int i = 0; i < 100; ++i) {
    const auto n = random_unit(rng);
    lines.push_back({c + 12.0 * n.vec(), -n});
  }
  const auto fit = least_squares_point(lines);
  EXPECT_NEAR((fit.point - c).norm(), 0.0, 1e-9);
  EXPECT_NEAR(fit.rms_dist, 0.0, 1e-9);
}

TEST(LeastSquaresPoint, DirectionSignIrrelevant) {
  std::mt19937_64 rng(5);
  std::vector<Line3> lines, flipped;
  for (int i = 0; i < 20; ++i) {
    Line3 l{Vec3(rng() % 7, rng() % 5, rng() % 3), random_unit(rng)};
    lines.push_back(l);
    flipped.push_back({l.point, -l.dir});
  }
  EXPECT_NEAR((least_squares_point(lines).point - least_squares_point(flipped).point).norm(), 0.0, 1e-12);
}

TEST(LeastSquaresPoint, ParallelBundleIsDegenerate) {
  const auto d = UnitVec3::normalize(Vec3(0, 0, 1));
  const std::vector<Line3> lines{{Vec3(0, 0, 0), d}, {Vec3(1, 0, 0), d}, {Vec3(0, 1, 0), d}};
  try {
    least_squares_point(lines);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateBundle);
  }
}

// 50 noisy lines through the origin; coarse-then-fine exhaustive grid over
// [-1, 1]^3 ending at 0.01 mm steps. The objective is convex, so the fine
// window around the coarse optimum contains the global grid optimum.
TEST(LeastSquaresPoint, MatchesBruteForceGridOnNoisyBundles) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int bundle = 0; bundle < 20; ++bundle) {
    std::vector<Line3> lines;
    for (int i = 0; i < 50; ++i) {
      const auto d = random_unit(rng);
      const Vec3 p = (4.0 + bundle % 5) * d.vec() + Vec3(noise(rng), noise(rng), noise(rng));
      const auto dn = UnitVec3::normalize(d.vec() + Vec3(noise(rng), noise(rng), noise(rng)) * 0.01);
      lines.push_back({p, dn});
    }
    const auto fit = least_squares_point(lines);
    const Vec3 coarse = grid_search(lines, Vec3::Constant(-1.0), Vec3::Constant(1.0), 0.1);
    const Vec3 fine = grid_search(lines, coarse - Vec3::Constant(0.1), coarse + Vec3::Constant(0.1), 0.01);
    EXPECT_LT((fit.point - fine).norm(), 0.02) << "bundle " << bundle;
    EXPECT_LE(sum_sq_dist(lines, fit.point), sum_sq_dist(lines, fine) + 1e-12) << "bundle " << bundle;
  }
}

TEST(BestFitAxis, ConeFrustumGivesZAxis) {
  // Normals of a cone about z: each meets the axis at a height set by the slope.
  std::vector<Line3> lines;
  const double slope = std::tan(deg2rad(25.0));
  for (int i = 0; i < 60; ++i) {
    const double phi = 2.0 * std::numbers::pi * i / 60.0;
    const double z = 1.0 + (i % 7) * 4.0;
    const double r = 3.0 + z * slope;
    const Vec3 p(r * std::cos(phi), r * std::sin(phi), z);
    const Vec3 n(std::cos(phi), std::sin(phi), -slope);
    lines.push_back({p, UnitVec3::normalize(n)});
  }
  const Line3 axis = best_fit_axis(lines);
  EXPECT_LT(std::acos(std::min(1.0, std::abs(axis.dir.z()))), 1e-6);
  EXPECT_LT(std::hypot(axis.point.x(), axis.point.y()), 1e-6);
}

TEST(BestFitAxis, SphereNormalsAreDegenerate) {
  std::mt19937_64 rng(9);
  std::vector<Line3> lines;
  for (int i = 0; i < 200; ++i) {
    const auto n = random_unit(rng);
    lines.push_back({12.0 * n.vec(), n});
  }
  try {
    best_fit_axis(lines);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateBundle);
  }
}

TEST(BestFitAxis, TwoSphereEyeNormalsRecoverOpticalAxis) {
  EyeModel eye;
  eye = rotate_eye(eye, 10.0, -5.0);
  std::vector<Line3> lines;
  std::vector<Line3> flipped;
  // Rays from a point in front of the eye, spread over both regions.
  const Vec3 origin = eye.sclera_center + 40.0 * eye.optical_axis.vec() + Vec3(3, 2, 0);
  for (int i = -20; i <= 20; ++i) {
    for (int j = -20; j <= 20; ++j) {
      const Vec3 target = eye.sclera_center + Vec3(i * 0.5, j * 0.5, 0.0);
      const Ray ray{origin, UnitVec3::normalize(target - origin)};
      if (auto hit = eye_surface_hit(eye, ray)) {
        lines.push_back({hit->point, hit->normal});
        flipped.push_back({hit->point, -hit->normal});
      }
    }
  }
  ASSERT_GT(lines.size(), 500u);
  const Line3 axis = best_fit_axis(lines);
  const double err = std::min(angle_between(axis.dir, eye.optical_axis), angle_between(-axis.dir, eye.optical_axis));
  EXPECT_LT(err, 0.1);
  const Line3 axis2 = best_fit_axis(flipped);
  EXPECT_LT(std::min(angle_between(axis2.dir, axis.dir), angle_between(-axis2.dir, axis.dir)), 1e-6);
}

TEST(AngleBetween, Examples) {
  const auto x = UnitVec3::normalize(Vec3(1, 0, 0));
  const auto y = UnitVec3::normalize(Vec3(0, 1, 0));
  EXPECT_NEAR(angle_between(x, x), 0.0, 1e-12);
  EXPECT_NEAR(angle_between(x, y), 90.0, 1e-12);
  const auto r = UnitVec3::normalize(axis_angle(UnitVec3::normalize(Vec3(0, 0, 1)), deg2rad(3.0)) * x.vec());
  EXPECT_NEAR(angle_between(x, r), 3.0, 1e-9);
  EXPECT_NEAR(angle_between(x, -x), 180.0, 1e-12);
}

TEST(UnitVec, ZeroVectorRejected) { EXPECT_THROW(UnitVec3::normalize(Vec3::Zero()), Error); }
