// SPDX-License-Identifier: Apache-2.0
//
// Pinhole cameras, ray generation, box clipping and depth sampling.
// Camera frames follow the Blender/NeRF convention: the camera looks down
// its local -z axis with +y up, and poses map camera to world.
#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

namespace gnelf::geometry {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return s * a; }
  friend constexpr bool operator==(Vec3, Vec3) = default;
};

constexpr double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(Vec3 a) { return (1.0 / norm(a)) * a; }

struct CameraIntrinsics {
  int width = 0;
  int height = 0;
  double focal = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  /// Principal point defaults to the image centre.
  static CameraIntrinsics centered(int width, int height, double focal);
  /// Intrinsics for an image downscaled by an integer factor.
  CameraIntrinsics scaled(int factor) const;
  void validate() const;
};

/// Camera-to-world rigid transform stored as a row-major 4x4 matrix.
struct Pose {
  std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  static Pose from_rows(const std::array<double, 16>& rows);
  double rotation(int row, int col) const { return m[row * 4 + col]; }
  Vec3 translation() const { return {m[3], m[7], m[11]}; }
  Vec3 rotate(Vec3 v) const;
  /// Throws InputDomainError unless the rotation block is orthonormal within
  /// `tol` and the last row is (0, 0, 0, 1).
  void validate(double tol = 1e-4) const;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length

  Vec3 at(double t) const { return origin + t * direction; }
};

struct Aabb {
  Vec3 min{-1.0, -1.0, -1.0};
  Vec3 max{1.0, 1.0, 1.0};

  bool contains(Vec3 p, double slack = 0.0) const;
  Vec3 extent() const { return max - min; }
  void validate() const;
};

struct PointSequence {
  std::vector<Vec3> points;
  std::vector<double> ts;
  bool valid = false;
};

struct Interval {
  double t_near;
  double t_far;
};

/// Orbit camera around `target`, z-up. Angles in degrees; elevation is
/// clamped to +-89 so the view basis stays defined.
struct Orbit {
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  double radius = 4.0;
  Vec3 target{};
};

Ray generate_ray(const CameraIntrinsics& cam, const Pose& pose, int i, int j);

/// Slab test. The interval is clipped to t >= 0, so an origin inside the
/// box yields t_near = 0.
std::optional<Interval> intersect_aabb(const Ray& ray, const Aabb& box);

/// Mid-bin uniform depths t_k = t_near + (k + 0.5) / K * (t_far - t_near).
PointSequence sample_points(const Ray& ray, double t_near, double t_far, int count);

/// Forward-facing normalized device coordinates. The ray is first moved to
/// the near plane, then warped so that depth (-near .. -inf) maps to NDC z
/// (-1 .. 1). The returned direction is re-normalized, so a ray that reaches
/// infinity travels a finite distance in NDC.
Ray to_ndc(const Ray& ray, double focal, int width, int height, double near);
Vec3 world_to_ndc(Vec3 p, double focal, int width, int height, double near);
Vec3 ndc_to_world(Vec3 p, double focal, int width, int height, double near);

Pose orbit_pose(const Orbit& orbit);

}  // namespace gnelf::geometry
