// SPDX-License-Identifier: Apache-2.0
//
// A trained scene: encoder grid, ray decoder and the camera it was fitted to.
#pragma once
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gnelf/config.hpp"
#include "gnelf/decoder.hpp"
#include "gnelf/geometry.hpp"
#include "gnelf/gridenc.hpp"
#include "gnelf/image.hpp"

namespace gnelf {

struct Model {
  PresetConfig config;
  geometry::CameraIntrinsics intrinsics;
  gridenc::HashTriPlane grid;
  decoder::DecoderParams decoder;

  /// Fresh parameters seeded from config.seed.
  static Model create(const PresetConfig& config, const geometry::CameraIntrinsics& intrinsics);
  /// Zero-filled parameters with the layout implied by `config`.
  static Model empty(const PresetConfig& config, const geometry::CameraIntrinsics& intrinsics);

  std::size_t parameter_count() const;
  /// Box the grid spans: the configured AABB, or the NDC cube [-1,1]^3.
  geometry::Aabb sampling_box() const;
};

/// A ray clipped to the sampling box, expressed in sampling space (NDC for
/// forward-facing scenes), plus its world direction for view encoding.
struct MarchedRay {
  geometry::Ray ray;
  double t_near = 0.0;
  double t_far = 0.0;
  geometry::Vec3 view_dir;

  geometry::Vec3 point(int k, int count) const {
    return ray.at(t_near + (k + 0.5) / count * (t_far - t_near));
  }
};

/// nullopt when the ray misses the sampling box.
std::optional<MarchedRay> march(const Model& model, const geometry::Ray& ray);

/// Decoder inputs for a batch of marched rays, ray-innermost.
struct RayBatch {
  int rays = 0;
  int steps = 0;
  int width = 0;
  std::vector<float> step_inputs;  // [step][feature][ray]
  std::vector<float> ray_inputs;   // [sh][ray]
};

void encode_batch(const Model& model, std::span<const MarchedRay> rays, gridenc::LevelMask mask,
                  RayBatch& out);

Color render_ray(const Model& model, const geometry::Ray& ray, gridenc::LevelMask mask = {});

/// Batched equivalent of render_ray over consecutive groups of at most 64
/// rays.
void render_rays(const Model& model, std::span<const geometry::Ray> rays, gridenc::LevelMask mask,
                 std::span<Color> out);

struct RenderOptions {
  gridenc::LevelMask mask;
  /// 0 picks the hardware concurrency; 1 renders on the calling thread.
  int threads = 0;
};

inline constexpr int kRenderChunk = 64;

/// Renders at (W/scale) x (H/scale). Pixels are split into fixed chunks, so
/// the result does not depend on the thread count.
Image render_image(const Model& model, const geometry::CameraIntrinsics& cam,
                   const geometry::Pose& pose, int scale = 1, const RenderOptions& options = {});

/// Runs body(i) for i in [0, count) over `threads` workers (0 = hardware).
void parallel_for(int count, int threads, const std::function<void(int worker, int i)>& body);
int resolve_threads(int threads);

}  // namespace gnelf
