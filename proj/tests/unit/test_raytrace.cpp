#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lensforge/raytrace.hpp"
#include "oracles.hpp"

using namespace lensforge;
using lensforge::testing::snell_residual;
using lensforge::testing::sphere_hit_quadratic;
using lensforge::testing::sphere_residual;

namespace {

constexpr double kDeg = M_PI / 180.0;

Surface sphere(double radius, double semi) {
  Surface s;
  s.kind = SurfaceKind::Sphere;
  s.curvature = std::isinf(radius) ? 0.0 : 1.0 / radius;
  s.semi_diameter = semi;
  return s;
}

Ray make_ray(Vec3 p, Vec3 d) {
  Ray r;
  r.position = p;
  r.direction = d.normalized();
  return r;
}

}  // namespace

TEST(Intersect, AxialRayOntoPlaneAdvancesExactly) {
  const Ray out = intersect_surface(make_ray({0, 0, -3.25}, {0, 0, 1}), sphere(INFINITY, 5.0), 4.5);
  ASSERT_TRUE(out.alive);
  EXPECT_EQ(out.position.z(), 4.5);
  EXPECT_EQ(out.position.x(), 0.0);
  EXPECT_EQ(out.position.y(), 0.0);
}

TEST(Intersect, HitBeyondSemiDiameterIsVignetted) {
  // Ray parallel to the axis at height 6 mm onto the MOS-S1 rear surface (semi-diameter 5.594 mm).
  TraceStats stats;
  const Ray out = intersect_surface(make_ray({0, 6.0, -1.0}, {0, 0, 1}), sphere(-8.711, 5.594), 8.7, true, &stats);
  EXPECT_FALSE(out.alive);
  EXPECT_EQ(out.fate, RayFate::Vignetted);
  EXPECT_EQ(stats.vignetted, 1u);
}

TEST(Intersect, OffAxisSphereMatchesQuadraticSolution) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double vz = 8.7;
  for (double radius : {-8.711, 8.711, -37.536, 52.628}) {
    for (int i = 0; i < 200; ++i) {
      const Vec3 p(2.0 * u(rng), 2.0 * u(rng), -5.0);
      const Vec3 d = Vec3(0.15 * u(rng), 0.15 * u(rng), 1.0).normalized();
      const Ray out = intersect_surface(make_ray(p, d), sphere(radius, 100.0), vz, false);
      const auto ref = sphere_hit_quadratic(p, d, vz, radius);
      ASSERT_TRUE(ref.has_value());
      ASSERT_TRUE(out.alive);
      EXPECT_LT((out.position - *ref).norm(), 1e-10);
      EXPECT_LT(sphere_residual(out.position, vz, radius), 1e-10);
    }
  }
}

TEST(Refract, NormalIncidenceIsUnchanged) {
  const Ray in = make_ray({0, 0, 0}, {0, 0, 1});
  const Ray out = refract(in, -Vec3::UnitZ(), 1.0, 1.7);
  ASSERT_TRUE(out.alive);
  EXPECT_LT((out.direction - in.direction).norm(), 1e-15);
}

TEST(Refract, ThirtyDegreesIntoGlassGivesArcsinOneThird) {
  const Ray in = make_ray({0, 0, 0}, {0, std::sin(30 * kDeg), std::cos(30 * kDeg)});
  const Ray out = refract(in, -Vec3::UnitZ(), 1.0, 1.5);
  ASSERT_TRUE(out.alive);
  const double theta2 = std::asin(out.direction.y());
  EXPECT_NEAR(theta2, std::asin(1.0 / 3.0), 1e-14);
  EXPECT_NEAR(theta2 / kDeg, 19.471, 1e-3);
  EXPECT_NEAR(out.direction.norm(), 1.0, 1e-12);
  EXPECT_LT(snell_residual(in.direction, out.direction, Vec3::UnitZ(), 1.0, 1.5), 1e-15);
  EXPECT_EQ(out.direction.x(), 0.0);
}

TEST(Refract, TotalInternalReflectionKillsRay) {
  TraceStats stats;
  const Ray in = make_ray({0, 0, 0}, {0, std::sin(60 * kDeg), std::cos(60 * kDeg)});
  const Ray out = refract(in, -Vec3::UnitZ(), 1.5, 1.0, &stats);
  EXPECT_FALSE(out.alive);
  EXPECT_EQ(out.fate, RayFate::TotalInternalReflection);
  EXPECT_EQ(stats.tir, 1u);
}

TEST(Refract, ReversedRayRecoversIncidentDirection) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 n = Vec3(u(rng), u(rng), -1.0).normalized();
    const Ray in = make_ray({0, 0, 0}, {u(rng), u(rng), 1.0});
    const Ray out = refract(in, n, 1.0, 1.62);
    ASSERT_TRUE(out.alive);
    Ray back = out;
    back.direction = -out.direction;
    const Ray rev = refract(back, n, 1.62, 1.0);
    ASSERT_TRUE(rev.alive);
    EXPECT_LT((-rev.direction - in.direction).norm(), 1e-9);
  }
}

TEST(Aim, OnAxisChiefRayFollowsAxis) {
  const auto lens = bundled_lens("MOS-S2");
  const AimResult a = aim_ray(lens, 0.0, Vec2(0, 0));
  ASSERT_TRUE(a.converged);
  EXPECT_LT(std::abs(a.ray.direction.x()) + std::abs(a.ray.direction.y()), 1e-12);
  EXPECT_LT(a.ray.position.head<2>().norm(), 1e-9);
}

TEST(Aim, StopFirstLensNeedsAtMostOneUpdate) {
  const auto lens = bundled_lens("MOS-S1");
  for (double field : {0.0, 5.0, 15.0, 21.0}) {
    const AimResult a = aim_ray(lens, field, Vec2(0.3, -0.7));
    ASSERT_TRUE(a.converged) << field;
    EXPECT_LE(a.iterations, 1) << field;
  }
}

TEST(Aim, SixPStopCrossingByRetrace) {
  const auto lens = bundled_lens("6P");
  const AimResult a = aim_ray(lens, 10.0, Vec2(0.5, 0.0));
  ASSERT_TRUE(a.converged);
  const PreparedLens prepared(lens, kLambdaD);
  TraceOptions opt;
  opt.last_surface = lens.stop_index;
  const Ray at_stop = prepared.trace(a.ray, opt);
  ASSERT_TRUE(at_stop.alive);
  EXPECT_EQ(lens.stop_index, 2u);
  EXPECT_NEAR(at_stop.position.x(), 0.5 * 8.131, 1e-6);
  EXPECT_NEAR(at_stop.position.y(), 0.0, 1e-6);
}

TEST(Trace, DirectionStaysNormalizedThroughEveryLens) {
  for (const auto& lens : bundled_lenses()) {
    const PreparedLens prepared(lens, 550.0);
    TraceStats stats;
    const double fmax = max_field_angle(lens);
    for (double f : {0.0, 0.5 * fmax, 0.9 * fmax}) {
      const AimResult a = aim_ray(prepared, ObjectPoint{f, 0.0, INFINITY}, Vec2(0.4, 0.2));
      if (!a.converged) continue;
      prepared.trace(a.ray, {}, &stats);
    }
    EXPECT_LT(stats.max_direction_drift, 1e-12) << lens.id;
    EXPECT_LT(stats.max_snell_residual, 1e-9) << lens.id;
    EXPECT_LT(stats.max_surface_residual, 1e-10) << lens.id;
  }
}

TEST(Trace, PositiveFieldImagesOntoPositiveY) {
  const auto lens = bundled_lens("MOS-S1");
  EXPECT_GT(chief_ray_image_height(lens, 10.0), 0.0);
  EXPECT_NEAR(field_angle_for_image_height(lens, chief_ray_image_height(lens, 10.0)), 10.0, 1e-6);
}
