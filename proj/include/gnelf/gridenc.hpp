// SPDX-License-Identifier: Apache-2.0
//
// Hash-based multi-resolution tri-plane encoder.
//
// A point inside the scene box is normalized to [0,1]^3 and projected onto
// the xy, xz and yz planes. Every plane carries one table per resolution
// level; a level whose (r+1)^2 vertex lattice fits in the table cap is stored
// densely, larger levels are addressed through a spatial hash. The per-point
// feature is the concatenation of the bilinearly blended level features,
// plane-major: [xy level 0..L-1, xz level 0..L-1, yz level 0..L-1].
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gnelf/geometry.hpp"

namespace gnelf::gridenc {

inline constexpr int kPlanes = 3;
inline constexpr int kShDim = 16;
inline constexpr std::uint32_t kHashPrime = 2654435761u;

enum class Plane : int { xy = 0, xz = 1, yz = 2 };

struct GridConfig {
  int levels = 8;
  int r_min = 16;
  int r_max = 1024;
  int feature_dim = 2;
  std::uint32_t table_cap = 1u << 14;

  void validate() const;
  /// Width of one point feature, 3 * levels * feature_dim.
  int point_feature_width() const { return kPlanes * levels * feature_dim; }
};

struct LevelMask {
  int masked_top_k = 0;

  bool masks(int level, int levels) const { return level >= levels - masked_top_k; }
};

/// Geometric ladder r_l = floor(r_min * b^l) with endpoints pinned to
/// r_min and r_max.
std::vector<int> resolution_ladder(const GridConfig& cfg);

/// ((x * 1) xor (y * 2654435761)) mod T over wrapping uint32 arithmetic.
/// T must be a power of two.
constexpr std::uint32_t hash_index(std::uint32_t x, std::uint32_t y, std::uint32_t table_size) {
  return (x ^ (y * kHashPrime)) & (table_size - 1u);
}

struct LevelLayout {
  int resolution = 0;
  bool dense = false;
  std::uint32_t entries = 0;
  std::size_t offset = 0;  // scalar offset inside one plane
};

/// Four blended lattice vertices of one plane-level lookup. Offsets are
/// absolute scalar offsets into HashTriPlane::values().
struct Stencil {
  std::array<std::size_t, 4> offsets{};
  std::array<float, 4> weights{};
};

class HashTriPlane {
 public:
  HashTriPlane(GridConfig cfg, geometry::Aabb aabb);

  /// Entries drawn uniformly from [-scale, scale].
  static HashTriPlane initialized(GridConfig cfg, geometry::Aabb aabb, std::uint64_t seed,
                                  float scale = 1e-4f);

  const GridConfig& config() const { return cfg_; }
  const geometry::Aabb& aabb() const { return aabb_; }
  const LevelLayout& layout(int level) const { return layouts_.at(level); }
  int feature_width() const { return cfg_.point_feature_width(); }
  std::size_t parameter_count() const { return values_.size(); }
  std::size_t plane_size() const { return plane_size_; }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  /// Entry slot for lattice vertex (ix, iy), dense or hashed per level.
  std::uint32_t vertex_slot(int level, std::uint32_t ix, std::uint32_t iy) const;
  std::size_t entry_offset(Plane plane, int level, std::uint32_t slot) const;

  /// Lookup stencil for normalized plane coordinates (u, v), clamped to [0,1].
  Stencil stencil(Plane plane, int level, double u, double v) const;

 private:
  GridConfig cfg_;
  geometry::Aabb aabb_;
  std::vector<LevelLayout> layouts_;
  std::size_t plane_size_ = 0;
  std::vector<float> values_;
};

/// Total grid scalars 3 * sum_l min((r_l+1)^2, T_max) * F.
std::size_t grid_parameter_count(const GridConfig& cfg);

std::vector<float> plane_feature(const HashTriPlane& grid, Plane plane, int level, double u,
                                 double v);

/// Writes the N-wide feature of world point x into `out`.
void point_feature(const HashTriPlane& grid, geometry::Vec3 x, LevelMask mask,
                   std::span<float> out);
std::vector<float> point_feature(const HashTriPlane& grid, geometry::Vec3 x, LevelMask mask = {});

/// Scatter-adds upstream * bilinear weight into `grad` (same layout as
/// values()). Not thread-safe on a shared `grad`.
void point_feature_backward(const HashTriPlane& grid, geometry::Vec3 x, LevelMask mask,
                            std::span<const float> upstream, std::span<float> grad);

/// Real spherical harmonics up to degree 4 (16 coefficients).
std::array<float, kShDim> sh_encode(geometry::Vec3 dir);

/// Cosine similarity of two flattened images.
double grid_similarity(std::span<const float> a, std::span<const float> b);

}  // namespace gnelf::gridenc
