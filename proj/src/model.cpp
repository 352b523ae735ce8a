// SPDX-License-Identifier: Apache-2.0
#include "gnelf/model.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "gnelf/error.hpp"
#include "rng.hpp"

namespace gnelf {

using geometry::Aabb;
using geometry::Ray;
using geometry::Vec3;

namespace {

gridenc::HashTriPlane make_grid(const PresetConfig& cfg) {
  const Aabb box = cfg.mode == SceneMode::ndc_forward ? Aabb{} : cfg.aabb;
  return gridenc::HashTriPlane::initialized(cfg.grid, box, detail::mix_seed(cfg.seed, 1),
                                            cfg.grid_init_scale);
}

}  // namespace

Model Model::create(const PresetConfig& config, const geometry::CameraIntrinsics& intrinsics) {
  PresetConfig cfg = config;
  cfg.finalize();
  intrinsics.validate();
  return Model{cfg, intrinsics, make_grid(cfg), decoder::init_decoder(cfg.decoder, detail::mix_seed(cfg.seed, 2))};
}

Model Model::empty(const PresetConfig& config, const geometry::CameraIntrinsics& intrinsics) {
  PresetConfig cfg = config;
  cfg.finalize();
  intrinsics.validate();
  const Aabb box = cfg.mode == SceneMode::ndc_forward ? Aabb{} : cfg.aabb;
  return Model{cfg, intrinsics, gridenc::HashTriPlane(cfg.grid, box), decoder::DecoderParams(cfg.decoder)};
}

std::size_t Model::parameter_count() const {
  return grid.parameter_count() + decoder.values().size();
}

Aabb Model::sampling_box() const { return grid.aabb(); }

std::optional<MarchedRay> march(const Model& model, const Ray& ray) {
  MarchedRay out;
  out.view_dir = ray.direction;
  if (model.config.mode == SceneMode::ndc_forward) {
    if (!(ray.direction.z < 0.0)) return std::nullopt;
    out.ray = geometry::to_ndc(ray, model.intrinsics.focal, model.intrinsics.width,
                               model.intrinsics.height, model.config.near);
  } else {
    out.ray = ray;
  }
  const auto hit = geometry::intersect_aabb(out.ray, model.sampling_box());
  if (!hit) return std::nullopt;
  out.t_near = hit->t_near;
  out.t_far = hit->t_far;
  return out;
}

void encode_batch(const Model& model, std::span<const MarchedRay> rays, gridenc::LevelMask mask,
                  RayBatch& out) {
  const int b = static_cast<int>(rays.size());
  const int k = model.config.samples;
  const int n = model.grid.feature_width();
  out.rays = b;
  out.steps = k;
  out.width = n;
  out.step_inputs.resize(static_cast<std::size_t>(k) * n * b);
  out.ray_inputs.resize(static_cast<std::size_t>(gridenc::kShDim) * b);
  std::vector<float> feat(n);
  for (int r = 0; r < b; ++r) {
    for (int t = 0; t < k; ++t) {
      gridenc::point_feature(model.grid, rays[r].point(t, k), mask, feat);
      float* dst = out.step_inputs.data() + static_cast<std::size_t>(t) * n * b + r;
      for (int f = 0; f < n; ++f) dst[static_cast<std::size_t>(f) * b] = feat[f];
    }
    const auto sh = gridenc::sh_encode(rays[r].view_dir);
    for (int i = 0; i < gridenc::kShDim; ++i) out.ray_inputs[static_cast<std::size_t>(i) * b + r] = sh[i];
  }
}

namespace {

void render_group(const Model& model, std::span<const Ray> rays, gridenc::LevelMask mask,
                  std::span<Color> out, decoder::DecoderTape& tape, RayBatch& batch) {
  std::vector<MarchedRay> hits;
  std::vector<int> where;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    if (auto m = march(model, rays[i])) {
      hits.push_back(*m);
      where.push_back(static_cast<int>(i));
    } else {
      out[i] = model.config.background;
    }
  }
  if (hits.empty()) return;
  encode_batch(model, hits, mask, batch);
  const int b = batch.rays;
  std::vector<float> rgb(3u * b);
  tape.forward(model.decoder, b, batch.steps, batch.step_inputs, batch.ray_inputs, rgb, false);
  for (int r = 0; r < b; ++r) out[where[r]] = {rgb[r], rgb[b + r], rgb[2 * b + r]};
}

}  // namespace

Color render_ray(const Model& model, const Ray& ray, gridenc::LevelMask mask) {
  Color c;
  decoder::DecoderTape tape;
  RayBatch batch;
  render_group(model, std::span<const Ray>(&ray, 1), mask, std::span<Color>(&c, 1), tape, batch);
  return c;
}

void render_rays(const Model& model, std::span<const Ray> rays, gridenc::LevelMask mask,
                 std::span<Color> out) {
  if (out.size() != rays.size()) throw ContractError("render_rays output size mismatch");
  decoder::DecoderTape tape;
  RayBatch batch;
  for (std::size_t at = 0; at < rays.size(); at += kRenderChunk) {
    const std::size_t n = std::min<std::size_t>(kRenderChunk, rays.size() - at);
    render_group(model, rays.subspan(at, n), mask, out.subspan(at, n), tape, batch);
  }
}

int resolve_threads(int threads) {
  if (threads < 0) throw InputDomainError("thread count must be >= 0");
  if (threads == 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return threads;
}

void parallel_for(int count, int threads, const std::function<void(int, int)>& body) {
  threads = std::min(resolve_threads(threads), std::max(count, 1));
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) body(0, i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next++; i < count; i = next++) body(w, i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = count;
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

Image render_image(const Model& model, const geometry::CameraIntrinsics& cam,
                   const geometry::Pose& pose, int scale, const RenderOptions& options) {
  if (scale != 1 && scale != 2 && scale != 4 && scale != 8) {
    throw InputDomainError("scale must be 1, 2, 4 or 8");
  }
  const auto sc = cam.scaled(scale);
  pose.validate();
  Image img(sc.width, sc.height);
  const int total = sc.width * sc.height;
  const int chunks = (total + kRenderChunk - 1) / kRenderChunk;
  const int workers = std::min(resolve_threads(options.threads), std::max(chunks, 1));
  std::vector<decoder::DecoderTape> tapes(workers);
  std::vector<RayBatch> batches(workers);
  parallel_for(chunks, workers, [&](int w, int c) {
    const int begin = c * kRenderChunk;
    const int n = std::min(kRenderChunk, total - begin);
    std::vector<Ray> rays(n);
    std::vector<Color> colors(n);
    for (int i = 0; i < n; ++i) {
      const int p = begin + i;
      rays[i] = geometry::generate_ray(sc, pose, p % sc.width, p / sc.width);
    }
    render_group(model, rays, options.mask, colors, tapes[w], batches[w]);
    for (int i = 0; i < n; ++i) std::copy(colors[i].begin(), colors[i].end(), img.pixels.data() + 3u * (begin + i));
  });
  return img;
}

}  // namespace gnelf
