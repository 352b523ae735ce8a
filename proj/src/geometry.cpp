// SPDX-License-Identifier: Apache-2.0
#include "gnelf/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <string>

#include "gnelf/error.hpp"

namespace gnelf::geometry {

CameraIntrinsics CameraIntrinsics::centered(int width, int height, double focal) {
  CameraIntrinsics cam{width, height, focal, 0.5 * width, 0.5 * height};
  cam.validate();
  return cam;
}

CameraIntrinsics CameraIntrinsics::scaled(int factor) const {
  if (factor < 1 || width % factor != 0 || height % factor != 0) {
    throw InputDomainError("scale factor " + std::to_string(factor) + " does not divide " +
                           std::to_string(width) + "x" + std::to_string(height));
  }
  const double s = 1.0 / factor;
  return {width / factor, height / factor, focal * s, cx * s, cy * s};
}

void CameraIntrinsics::validate() const {
  if (width <= 0 || height <= 0 || !(focal > 0.0) || !std::isfinite(focal)) {
    throw InputDomainError("camera intrinsics need positive width, height and focal");
  }
}

Pose Pose::from_rows(const std::array<double, 16>& rows) {
  Pose p;
  p.m = rows;
  return p;
}

Vec3 Pose::rotate(Vec3 v) const {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[4] * v.x + m[5] * v.y + m[6] * v.z,
          m[8] * v.x + m[9] * v.y + m[10] * v.z};
}

void Pose::validate(double tol) const {
  for (double v : m) {
    if (!std::isfinite(v)) throw InputDomainError("pose contains non-finite values");
  }
  if (std::abs(m[12]) > tol || std::abs(m[13]) > tol || std::abs(m[14]) > tol ||
      std::abs(m[15] - 1.0) > tol) {
    throw InputDomainError("pose last row must be (0, 0, 0, 1)");
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      double d = 0.0;
      for (int r = 0; r < 3; ++r) d += rotation(r, a) * rotation(r, b);
      if (std::abs(d - (a == b ? 1.0 : 0.0)) > tol) {
        throw InputDomainError("pose rotation block is not orthonormal");
      }
    }
  }
}

bool Aabb::contains(Vec3 p, double slack) const {
  for (int a = 0; a < 3; ++a) {
    if (p[a] < min[a] - slack || p[a] > max[a] + slack) return false;
  }
  return true;
}

void Aabb::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (!(min[a] < max[a])) throw InputDomainError("aabb min must be below max on every axis");
  }
}

Ray generate_ray(const CameraIntrinsics& cam, const Pose& pose, int i, int j) {
  if (i < 0 || i >= cam.width || j < 0 || j >= cam.height) {
    throw InputDomainError("pixel (" + std::to_string(i) + ", " + std::to_string(j) +
                           ") outside " + std::to_string(cam.width) + "x" +
                           std::to_string(cam.height));
  }
  const Vec3 local{(i - cam.cx) / cam.focal, -(j - cam.cy) / cam.focal, -1.0};
  return {pose.translation(), normalized(pose.rotate(local))};
}

std::optional<Interval> intersect_aabb(const Ray& ray, const Aabb& box) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double t0 = -inf;
  double t1 = inf;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.direction[a];
    if (d == 0.0) {
      if (o < box.min[a] || o > box.max[a]) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / d;
    double ta = (box.min[a] - o) * inv;
    double tb = (box.max[a] - o) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  t0 = std::max(t0, 0.0);
  if (!(t0 < t1)) return std::nullopt;
  return Interval{t0, t1};
}

PointSequence sample_points(const Ray& ray, double t_near, double t_far, int count) {
  if (count < 1) throw InputDomainError("sample count must be at least 1");
  if (!(t_near < t_far)) throw InputDomainError("sample interval is empty");
  PointSequence seq;
  seq.valid = true;
  seq.ts.resize(count);
  seq.points.resize(count);
  const double span = t_far - t_near;
  for (int k = 0; k < count; ++k) {
    const double t = t_near + (k + 0.5) / count * span;
    seq.ts[k] = t;
    seq.points[k] = ray.at(t);
  }
  return seq;
}

Vec3 world_to_ndc(Vec3 p, double focal, int width, int height, double near) {
  if (!(p.z < 0.0)) throw InputDomainError("world_to_ndc needs a point in front of the camera");
  return {-focal / (0.5 * width) * p.x / p.z, -focal / (0.5 * height) * p.y / p.z,
          1.0 + 2.0 * near / p.z};
}

Vec3 ndc_to_world(Vec3 p, double focal, int width, int height, double near) {
  if (!(p.z < 1.0)) throw InputDomainError("ndc_to_world needs z < 1");
  const double z = 2.0 * near / (p.z - 1.0);
  return {-p.x * z * (0.5 * width) / focal, -p.y * z * (0.5 * height) / focal, z};
}

Ray to_ndc(const Ray& ray, double focal, int width, int height, double near) {
  const Vec3 d = ray.direction;
  if (!(d.z < 0.0)) throw InputDomainError("to_ndc needs a ray pointing down -z");
  if (!(near > 0.0)) throw InputDomainError("to_ndc needs a positive near plane");
  const double shift = -(near + ray.origin.z) / d.z;
  const Vec3 o = ray.origin + shift * d;
  const double ax = -focal / (0.5 * width);
  const double ay = -focal / (0.5 * height);
  const Vec3 ndc_o{ax * o.x / o.z, ay * o.y / o.z, 1.0 + 2.0 * near / o.z};
  const Vec3 ndc_d{ax * (d.x / d.z - o.x / o.z), ay * (d.y / d.z - o.y / o.z), -2.0 * near / o.z};
  return {ndc_o, normalized(ndc_d)};
}

Pose orbit_pose(const Orbit& orbit) {
  const double deg = std::numbers::pi / 180.0;
  const double el = std::clamp(orbit.elevation_deg, -89.0, 89.0) * deg;
  const double az = orbit.azimuth_deg * deg;
  const Vec3 offset{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
  const Vec3 eye = orbit.target + orbit.radius * offset;
  const Vec3 back = normalized(offset);
  const Vec3 right = normalized(cross(Vec3{0, 0, 1}, back));
  const Vec3 up = cross(back, right);
  return Pose::from_rows({right.x, up.x, back.x, eye.x,  //
                          right.y, up.y, back.y, eye.y,  //
                          right.z, up.z, back.z, eye.z,  //
                          0, 0, 0, 1});
}

}  // namespace gnelf::geometry
