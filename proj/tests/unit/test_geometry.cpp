// SPDX-License-Identifier: Apache-2.0
#include "gnelf/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gnelf/error.hpp"
#include "test_support.hpp"

using namespace gnelf;
using namespace gnelf::geometry;
using gnelf::testing::uniform;

namespace {

const CameraIntrinsics kCam = CameraIntrinsics::centered(64, 48, 50.0);

// Straight 3x3 matrix product, written independently of Pose::rotate.
Vec3 mat_vec(const std::array<double, 16>& m, Vec3 v) {
  double out[3];
  for (int r = 0; r < 3; ++r) {
    out[r] = 0.0;
    for (int c = 0; c < 3; ++c) out[r] += m[r * 4 + c] * v[c];
  }
  return {out[0], out[1], out[2]};
}

void expect_vec_near(Vec3 a, Vec3 b, double tol) {
  EXPECT_NEAR(a.x, b.x, tol);
  EXPECT_NEAR(a.y, b.y, tol);
  EXPECT_NEAR(a.z, b.z, tol);
}

}  // namespace

TEST(GenerateRay, PrincipalPointLooksDownMinusZ) {
  const Ray r = generate_ray(kCam, Pose{}, 32, 24);
  expect_vec_near(r.direction, {0, 0, -1}, 1e-15);
  expect_vec_near(r.origin, {0, 0, 0}, 0.0);
}

TEST(GenerateRay, OneFocalRightIsFortyFiveDegrees) {
  const auto cam = CameraIntrinsics::centered(200, 100, 50.0);
  const Ray r = generate_ray(cam, Pose{}, 150, 50);
  expect_vec_near(r.direction, {1 / std::sqrt(2.0), 0, -1 / std::sqrt(2.0)}, 1e-15);
}

TEST(GenerateRay, RowsGrowDownwards) {
  const Ray r = generate_ray(kCam, Pose{}, 32, 47);
  EXPECT_LT(r.direction.y, 0.0);
}

TEST(GenerateRay, RotatedPoseMatchesMatrixOracle) {
  const Pose pose = gnelf::testing::yaw_pose(90.0, {1, 2, 3});
  for (int j : {0, 10, 47}) {
    for (int i : {0, 32, 63}) {
      const Ray r = generate_ray(kCam, pose, i, j);
      const Vec3 cam_dir{(i - kCam.cx) / kCam.focal, -(j - kCam.cy) / kCam.focal, -1.0};
      expect_vec_near(r.direction, normalized(mat_vec(pose.m, cam_dir)), 1e-14);
      expect_vec_near(r.origin, {1, 2, 3}, 0.0);
    }
  }
  // 90 degree yaw turns the -z view axis into itself and +x into +y.
  const Ray right = generate_ray(kCam, pose, 63, 24);
  EXPECT_GT(right.direction.y, 0.5);
}

TEST(GenerateRay, OutOfRangePixelThrows) {
  EXPECT_THROW(generate_ray(kCam, Pose{}, 64, 0), InputDomainError);
  EXPECT_THROW(generate_ray(kCam, Pose{}, -1, 0), InputDomainError);
  EXPECT_THROW(generate_ray(kCam, Pose{}, 0, 48), InputDomainError);
}

TEST(GenerateRay, DirectionsAreUnitLength) {
  std::mt19937_64 rng(1);
  for (int n = 0; n < 200; ++n) {
    Orbit o{uniform(rng, 0, 360), uniform(rng, -80, 80), uniform(rng, 1, 6), {}};
    const Pose pose = orbit_pose(o);
    const Ray r = generate_ray(kCam, pose, static_cast<int>(rng() % 64), static_cast<int>(rng() % 48));
    EXPECT_NEAR(norm(r.direction), 1.0, 1e-12);
  }
}

TEST(Pose, ValidateRejectsSkewAndBadLastRow) {
  Pose p;
  p.m[0] = 1.01;
  EXPECT_THROW(p.validate(), InputDomainError);
  Pose q;
  q.m[15] = 2.0;
  EXPECT_THROW(q.validate(), InputDomainError);
  EXPECT_NO_THROW(gnelf::testing::yaw_pose(33.0).validate());
}

TEST(Intrinsics, ValidationAndScaling) {
  EXPECT_THROW(CameraIntrinsics::centered(0, 10, 5).validate(), InputDomainError);
  EXPECT_THROW(CameraIntrinsics::centered(10, 10, 0).validate(), InputDomainError);
  const auto s = CameraIntrinsics::centered(800, 800, 1111.0).scaled(2);
  EXPECT_EQ(s.width, 400);
  EXPECT_DOUBLE_EQ(s.focal, 555.5);
  EXPECT_DOUBLE_EQ(s.cx, 200.0);
  EXPECT_THROW(CameraIntrinsics::centered(10, 10, 5).scaled(3), InputDomainError);
}

TEST(IntersectAabb, AxisAlignedHit) {
  const auto hit = intersect_aabb({{0, 0, 2}, {0, 0, -1}}, Aabb{});
  ASSERT_TRUE(hit);
  EXPECT_DOUBLE_EQ(hit->t_near, 1.0);
  EXPECT_DOUBLE_EQ(hit->t_far, 3.0);
}

TEST(IntersectAabb, Miss) {
  EXPECT_FALSE(intersect_aabb({{5, 5, 5}, {0, 0, -1}}, Aabb{}));
}

TEST(IntersectAabb, OriginInsideStartsAtZero) {
  const auto hit = intersect_aabb({{0, 0, 0}, {1, 0, 0}}, Aabb{});
  ASSERT_TRUE(hit);
  EXPECT_EQ(hit->t_near, 0.0);
  EXPECT_DOUBLE_EQ(hit->t_far, 1.0);
}

TEST(IntersectAabb, BoxBehindRayMisses) {
  EXPECT_FALSE(intersect_aabb({{0, 0, 3}, {0, 0, 1}}, Aabb{}));
}

TEST(IntersectAabb, ZeroComponentOnSlabPlaneIsHandled) {
  // Direction has zero x and the origin sits outside the x slab: miss.
  EXPECT_FALSE(intersect_aabb({{1.5, 0, 3}, {0, 0, -1}}, Aabb{}));
  const auto hit = intersect_aabb({{0.5, 0, 3}, {0, 0, -1}}, Aabb{});
  ASSERT_TRUE(hit);
  EXPECT_DOUBLE_EQ(hit->t_near, 2.0);
}

// Brute-force march: first and last sample inside the box at step h.
TEST(IntersectAabb, AgreesWithDenseMarching) {
  std::mt19937_64 rng(7);
  const Aabb box{{-1, -0.5, -0.8}, {0.7, 1, 0.9}};
  const double h = 1e-4;
  int hits = 0;
  for (int n = 0; n < 400; ++n) {
    const Vec3 o{uniform(rng, -2.5, 2.5), uniform(rng, -2.5, 2.5), uniform(rng, -2.5, 2.5)};
    Vec3 target{uniform(rng, -1.2, 1.2), uniform(rng, -1.2, 1.2), uniform(rng, -1.2, 1.2)};
    const Ray ray{o, normalized(target - o)};
    std::optional<double> first, last;
    for (double t = 0.0; t < 9.0; t += h) {
      if (box.contains(ray.at(t))) {
        if (!first) first = t;
        last = t;
      }
    }
    const auto hit = intersect_aabb(ray, box);
    if (!first) {
      // Grazing hits shorter than one step may be invisible to the march.
      if (hit) EXPECT_LT(hit->t_far - hit->t_near, 2 * h);
      continue;
    }
    ++hits;
    ASSERT_TRUE(hit) << "ray " << n;
    EXPECT_NEAR(hit->t_near, *first, 1.01 * h);
    EXPECT_NEAR(hit->t_far, *last, 1.01 * h);
  }
  EXPECT_GT(hits, 100);
}

TEST(SamplePoints, MidBinDepths) {
  const Ray r{{0, 0, 0}, {0, 0, -1}};
  auto s = sample_points(r, 0.0, 1.0, 2);
  ASSERT_EQ(s.ts.size(), 2u);
  EXPECT_EQ(s.ts[0], 0.25);
  EXPECT_EQ(s.ts[1], 0.75);
  s = sample_points(r, 1.0, 3.0, 4);
  EXPECT_EQ(s.ts, (std::vector<double>{1.25, 1.75, 2.25, 2.75}));
  EXPECT_TRUE(s.valid);
}

TEST(SamplePoints, ClosedFormAndInsideBox) {
  std::mt19937_64 rng(3);
  const Aabb box{};
  for (int n = 0; n < 300; ++n) {
    const Vec3 o = 3.0 * gnelf::testing::random_unit(rng);
    const Ray ray{o, normalized(Vec3{uniform(rng, -.5, .5), uniform(rng, -.5, .5), uniform(rng, -.5, .5)} - o)};
    const auto hit = intersect_aabb(ray, box);
    if (!hit) continue;
    const int k = 1 + static_cast<int>(rng() % 64);
    const auto s = sample_points(ray, hit->t_near, hit->t_far, k);
    for (int i = 0; i < k; ++i) {
      EXPECT_NEAR(s.ts[i], hit->t_near + (i + 0.5) / k * (hit->t_far - hit->t_near), 1e-12);
      EXPECT_TRUE(box.contains(s.points[i], 1e-12));
      if (i > 0) EXPECT_GT(s.ts[i], s.ts[i - 1]);
    }
  }
}

TEST(SamplePoints, RejectsEmptyIntervalAndZeroCount) {
  const Ray r{{0, 0, 0}, {0, 0, -1}};
  EXPECT_THROW(sample_points(r, 1.0, 1.0, 4), InputDomainError);
  EXPECT_THROW(sample_points(r, 0.0, 1.0, 0), InputDomainError);
}

TEST(Ndc, CentralRayLandsOnAxisAtNearPlane) {
  const Ray r = to_ndc({{0, 0, 0}, {0, 0, -1}}, 50.0, 64, 48, 1.0);
  // The near plane maps to NDC z = -1.
  expect_vec_near(r.origin, {0, 0, -1}, 1e-15);
  expect_vec_near(r.direction, {0, 0, 1}, 1e-15);
}

TEST(Ndc, FarPointsApproachZOne) {
  const Vec3 p = world_to_ndc({0.3, -0.2, -1e9}, 50.0, 64, 48, 1.0);
  EXPECT_NEAR(p.z, 1.0, 1e-8);
}

TEST(Ndc, RejectsRaysPointingBackwards) {
  EXPECT_THROW(to_ndc({{0, 0, 0}, {0, 0, 1}}, 50.0, 64, 48, 1.0), InputDomainError);
  EXPECT_THROW(to_ndc({{0, 0, 0}, normalized({1, 0, 0})}, 50.0, 64, 48, 1.0), InputDomainError);
}

TEST(Ndc, RoundTripOnRandomRays) {
  std::mt19937_64 rng(11);
  const double f = 60.0, near = 1.0;
  const int w = 80, h = 60;
  for (int n = 0; n < 1000; ++n) {
    const Vec3 o{uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3), uniform(rng, -0.2, 0.2)};
    const Vec3 d = normalized({uniform(rng, -0.4, 0.4), uniform(rng, -0.4, 0.4), -1.0});
    const Ray world{o, d};
    const Ray ndc = to_ndc(world, f, w, h, near);
    EXPECT_NEAR(norm(ndc.direction), 1.0, 1e-12);
    // Points of the world ray beyond the near plane map onto the NDC ray.
    const double t0 = (near + o.z) / -d.z;
    for (double t : {0.0, 0.5, 3.0, 40.0}) {
      const Vec3 pw = world.at(t0 + t);
      const Vec3 pn = world_to_ndc(pw, f, w, h, near);
      const Vec3 back = ndc_to_world(pn, f, w, h, near);
      expect_vec_near(back, pw, 1e-4 * std::max(1.0, norm(pw)));
      // pn is on the NDC ray: (pn - origin) parallel to direction.
      const Vec3 rel = pn - ndc.origin;
      const Vec3 c = cross(rel, ndc.direction);
      EXPECT_LT(norm(c), 1e-9);
      EXPECT_GE(pn.z, -1.0 - 1e-12);
      EXPECT_LE(pn.z, 1.0);
    }
  }
}

TEST(OrbitPose, LooksAtTargetAndClampsElevation) {
  const Pose p = orbit_pose({30.0, 20.0, 4.0, {}});
  EXPECT_NO_THROW(p.validate(1e-9));
  EXPECT_NEAR(norm(p.translation()), 4.0, 1e-12);
  const Ray r = generate_ray(CameraIntrinsics::centered(64, 64, 50.0), p, 32, 32);
  expect_vec_near(r.direction, normalized(Vec3{} - p.translation()), 1e-12);
  const Pose top = orbit_pose({0.0, 120.0, 4.0, {}});
  EXPECT_NEAR(top.translation().z, 4.0 * std::sin(89.0 * M_PI / 180.0), 1e-9);
}

TEST(OrbitPose, AzimuthWrapsAround) {
  const Pose a = orbit_pose({10.0, 25.0, 3.0, {}});
  const Pose b = orbit_pose({370.0, 25.0, 3.0, {}});
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(a.m[i], b.m[i], 1e-12);
}
