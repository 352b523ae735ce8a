// SPDX-License-Identifier: Apache-2.0
#include "gnelf/gridenc.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>
#include <string>

#include "gnelf/error.hpp"
#include "rng.hpp"

namespace gnelf::gridenc {

using geometry::Vec3;

void GridConfig::validate() const {
  if (levels < 1) throw InputDomainError("grid needs at least one level");
  if (r_min < 1 || r_min > r_max) throw InputDomainError("grid resolutions need 1 <= r_min <= r_max");
  if (feature_dim < 1) throw InputDomainError("grid feature_dim must be positive");
  if (table_cap == 0 || !std::has_single_bit(table_cap)) {
    throw InputDomainError("grid table_cap must be a power of two");
  }
}

std::vector<int> resolution_ladder(const GridConfig& cfg) {
  cfg.validate();
  const int n = cfg.levels;
  std::vector<int> ladder(n);
  if (n == 1) {
    ladder[0] = cfg.r_min;
    return ladder;
  }
  const long double growth =
      std::exp((std::log(static_cast<long double>(cfg.r_max)) - std::log(static_cast<long double>(cfg.r_min))) /
               (n - 1));
  for (int l = 0; l < n; ++l) {
    const long double r = cfg.r_min * std::pow(growth, static_cast<long double>(l));
    // Snap values a few ulps under an integer (e.g. 16 * 2 = 31.999...).
    ladder[l] = static_cast<int>(std::floor(r * (1.0L + 1e-12L)));
  }
  ladder.front() = cfg.r_min;
  ladder.back() = cfg.r_max;
  return ladder;
}

std::size_t grid_parameter_count(const GridConfig& cfg) {
  std::size_t entries = 0;
  for (int r : resolution_ladder(cfg)) {
    const std::uint64_t lattice = static_cast<std::uint64_t>(r + 1) * static_cast<std::uint64_t>(r + 1);
    entries += static_cast<std::size_t>(std::min<std::uint64_t>(lattice, cfg.table_cap));
  }
  return kPlanes * entries * static_cast<std::size_t>(cfg.feature_dim);
}

HashTriPlane::HashTriPlane(GridConfig cfg, geometry::Aabb aabb) : cfg_(cfg), aabb_(aabb) {
  aabb_.validate();
  const auto ladder = resolution_ladder(cfg_);
  std::size_t offset = 0;
  for (int r : ladder) {
    LevelLayout level;
    level.resolution = r;
    const std::uint64_t lattice = static_cast<std::uint64_t>(r + 1) * static_cast<std::uint64_t>(r + 1);
    level.dense = lattice <= cfg_.table_cap;
    level.entries = level.dense ? static_cast<std::uint32_t>(lattice) : cfg_.table_cap;
    level.offset = offset;
    offset += static_cast<std::size_t>(level.entries) * cfg_.feature_dim;
    layouts_.push_back(level);
  }
  plane_size_ = offset;
  values_.assign(plane_size_ * kPlanes, 0.0f);
}

HashTriPlane HashTriPlane::initialized(GridConfig cfg, geometry::Aabb aabb, std::uint64_t seed,
                                       float scale) {
  HashTriPlane grid(cfg, aabb);
  std::mt19937_64 rng(seed);
  for (float& v : grid.values_) v = static_cast<float>(detail::uniform(rng, -scale, scale));
  return grid;
}

std::uint32_t HashTriPlane::vertex_slot(int level, std::uint32_t ix, std::uint32_t iy) const {
  const LevelLayout& lv = layouts_[level];
  if (lv.dense) return iy * static_cast<std::uint32_t>(lv.resolution + 1) + ix;
  return hash_index(ix, iy, lv.entries);
}

std::size_t HashTriPlane::entry_offset(Plane plane, int level, std::uint32_t slot) const {
  return static_cast<std::size_t>(plane) * plane_size_ + layouts_[level].offset +
         static_cast<std::size_t>(slot) * cfg_.feature_dim;
}

Stencil HashTriPlane::stencil(Plane plane, int level, double u, double v) const {
  const LevelLayout& lv = layouts_[level];
  const int r = lv.resolution;
  const double su = std::clamp(u, 0.0, 1.0) * r;
  const double sv = std::clamp(v, 0.0, 1.0) * r;
  const auto ix = static_cast<std::uint32_t>(std::min(static_cast<int>(su), r - 1));
  const auto iy = static_cast<std::uint32_t>(std::min(static_cast<int>(sv), r - 1));
  const auto fu = static_cast<float>(su - ix);
  const auto fv = static_cast<float>(sv - iy);

  Stencil s;
  s.offsets = {entry_offset(plane, level, vertex_slot(level, ix, iy)),
               entry_offset(plane, level, vertex_slot(level, ix + 1, iy)),
               entry_offset(plane, level, vertex_slot(level, ix, iy + 1)),
               entry_offset(plane, level, vertex_slot(level, ix + 1, iy + 1))};
  s.weights = {(1.0f - fu) * (1.0f - fv), fu * (1.0f - fv), (1.0f - fu) * fv, fu * fv};
  return s;
}

std::vector<float> plane_feature(const HashTriPlane& grid, Plane plane, int level, double u,
                                 double v) {
  const int f = grid.config().feature_dim;
  const Stencil s = grid.stencil(plane, level, u, v);
  const auto values = grid.values();
  std::vector<float> out(f, 0.0f);
  for (int c = 0; c < f; ++c) {
    out[c] = s.weights[0] * values[s.offsets[0] + c] + s.weights[1] * values[s.offsets[1] + c] +
             s.weights[2] * values[s.offsets[2] + c] + s.weights[3] * values[s.offsets[3] + c];
  }
  return out;
}

namespace {

struct PlaneCoords {
  std::array<double, 3> u;
  std::array<double, 3> v;
};

PlaneCoords project(const HashTriPlane& grid, Vec3 x) {
  if (!std::isfinite(x.x) || !std::isfinite(x.y) || !std::isfinite(x.z)) {
    throw InputDomainError("point_feature got a non-finite coordinate");
  }
  const auto& box = grid.aabb();
  const Vec3 n{(x.x - box.min.x) / (box.max.x - box.min.x), (x.y - box.min.y) / (box.max.y - box.min.y),
               (x.z - box.min.z) / (box.max.z - box.min.z)};
  return {{n.x, n.x, n.y}, {n.y, n.z, n.z}};
}

}  // namespace

void point_feature(const HashTriPlane& grid, Vec3 x, LevelMask mask, std::span<float> out) {
  const auto& cfg = grid.config();
  const int levels = cfg.levels;
  const int f = cfg.feature_dim;
  if (out.size() != static_cast<std::size_t>(grid.feature_width())) {
    throw ContractError("point_feature output has the wrong width");
  }
  const PlaneCoords pc = project(grid, x);
  const auto values = grid.values();
  for (int p = 0; p < kPlanes; ++p) {
    for (int l = 0; l < levels; ++l) {
      float* dst = out.data() + (p * levels + l) * f;
      if (mask.masks(l, levels)) {
        std::fill(dst, dst + f, 0.0f);
        continue;
      }
      const Stencil s = grid.stencil(static_cast<Plane>(p), l, pc.u[p], pc.v[p]);
      for (int c = 0; c < f; ++c) {
        dst[c] = s.weights[0] * values[s.offsets[0] + c] + s.weights[1] * values[s.offsets[1] + c] +
                 s.weights[2] * values[s.offsets[2] + c] + s.weights[3] * values[s.offsets[3] + c];
      }
    }
  }
}

std::vector<float> point_feature(const HashTriPlane& grid, Vec3 x, LevelMask mask) {
  std::vector<float> out(grid.feature_width());
  point_feature(grid, x, mask, out);
  return out;
}

void point_feature_backward(const HashTriPlane& grid, Vec3 x, LevelMask mask,
                            std::span<const float> upstream, std::span<float> grad) {
  const auto& cfg = grid.config();
  const int levels = cfg.levels;
  const int f = cfg.feature_dim;
  if (upstream.size() != static_cast<std::size_t>(grid.feature_width()) ||
      grad.size() != grid.parameter_count()) {
    throw ContractError("point_feature_backward buffer size mismatch");
  }
  const PlaneCoords pc = project(grid, x);
  for (int p = 0; p < kPlanes; ++p) {
    for (int l = 0; l < levels; ++l) {
      if (mask.masks(l, levels)) continue;
      const float* up = upstream.data() + (p * levels + l) * f;
      const Stencil s = grid.stencil(static_cast<Plane>(p), l, pc.u[p], pc.v[p]);
      for (int corner = 0; corner < 4; ++corner) {
        const float w = s.weights[corner];
        if (w == 0.0f) continue;
        float* g = grad.data() + s.offsets[corner];
        for (int c = 0; c < f; ++c) g[c] += w * up[c];
      }
    }
  }
}

std::array<float, kShDim> sh_encode(Vec3 dir) {
  const double len = geometry::norm(dir);
  if (!(std::abs(len - 1.0) <= 1e-4)) throw InputDomainError("sh_encode needs a unit direction");
  const double x = dir.x, y = dir.y, z = dir.z;
  const double xy = x * y, xz = x * z, yz = y * z;
  const double x2 = x * x, y2 = y * y, z2 = z * z;
  return {
      static_cast<float>(0.28209479177387814),
      static_cast<float>(-0.48860251190291987 * y),
      static_cast<float>(0.48860251190291987 * z),
      static_cast<float>(-0.48860251190291987 * x),
      static_cast<float>(1.0925484305920792 * xy),
      static_cast<float>(-1.0925484305920792 * yz),
      static_cast<float>(0.94617469575755997 * z2 - 0.31539156525251999),
      static_cast<float>(-1.0925484305920792 * xz),
      static_cast<float>(0.54627421529603959 * (x2 - y2)),
      static_cast<float>(0.59004358992664352 * y * (-3.0 * x2 + y2)),
      static_cast<float>(2.8906114426405538 * xy * z),
      static_cast<float>(0.45704579946446572 * y * (1.0 - 5.0 * z2)),
      static_cast<float>(0.3731763325901154 * z * (5.0 * z2 - 3.0)),
      static_cast<float>(0.45704579946446572 * x * (1.0 - 5.0 * z2)),
      static_cast<float>(1.4453057213202769 * z * (x2 - y2)),
      static_cast<float>(0.59004358992664352 * x * (-x2 + 3.0 * y2)),
  };
}

double grid_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw InputDomainError("similarity operands differ in size");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw InputDomainError("similarity undefined for a zero-norm image");
  // sqrt(aa * bb) recovers aa exactly when a == b, so identical images give 1.
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

}  // namespace gnelf::gridenc
