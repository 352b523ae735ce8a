// SPDX-License-Identifier: Apache-2.0
//
// Scene datasets: Blender-format ingestion, forward-facing camera sets and a
// procedural scene generator with an exact first-hit rasterizer.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gnelf/geometry.hpp"
#include "gnelf/image.hpp"

namespace gnelf::dataio {

enum class Split { train, val, test };

std::string to_string(Split split);
Split parse_split(const std::string& name);

struct Frame {
  geometry::Pose pose;
  Image image;
};

struct SceneDataset {
  std::vector<Frame> frames;
  geometry::CameraIntrinsics intrinsics;
  geometry::Aabb aabb;
  Color background{1.0f, 1.0f, 1.0f};
  Split split = Split::train;
  /// Near plane for forward-facing sets; 0 for object-centric scenes.
  double near = 0.0;

  /// Shared intrinsics, finite pixels in [0,1], orthonormal poses.
  void validate() const;
};

struct BlenderOptions {
  int downsample = 1;
  Color background{1.0f, 1.0f, 1.0f};
  geometry::Aabb aabb{{-1.5, -1.5, -1.5}, {1.5, 1.5, 1.5}};
};

/// Reads transforms_{split}.json and its images. Focal length comes from
/// camera_angle_x: f = 0.5 W / tan(0.5 angle).
SceneDataset load_blender_dataset(const std::filesystem::path& dir, Split split,
                                  const BlenderOptions& options = {});

/// Writes frames as PNGs plus transforms_{split}.json in the Blender layout.
void write_blender_dataset(const SceneDataset& data, const std::filesystem::path& dir);

/// Forward-facing camera set: {"intrinsics": {...}, "near": n,
/// "frames": [{"pose": [16 numbers], "image": "file.png"}]}.
SceneDataset load_camera_set(const std::filesystem::path& json_path, int downsample = 1,
                             Color background = {0.0f, 0.0f, 0.0f});

enum class PrimitiveKind { box, sphere };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::box;
  geometry::Vec3 center;
  geometry::Vec3 half_extent;  // box
  double radius = 0.0;         // sphere
  Color color{};
};

std::optional<double> intersect_primitive(const Primitive& prim, const geometry::Ray& ray);

struct ToySceneSpec {
  std::uint64_t seed = 0;
  int primitive_count = 3;
  /// Unset: alternate box, sphere, box, ...
  std::optional<PrimitiveKind> kind;
  geometry::Aabb bounds{{-0.8, -0.8, -0.8}, {0.8, 0.8, 0.8}};
  Color background{0.0f, 0.0f, 0.0f};
  /// When non-empty, used verbatim instead of seeded generation.
  std::vector<Primitive> primitives;

  /// Seeded primitives: sizes in [0.25, 0.45], centres keep every primitive
  /// inside `bounds`, colours quantized to 8-bit codes in [0.1, 0.95].
  std::vector<Primitive> resolve() const;
};

struct ToyViews {
  int count = 20;
  int width = 64;
  int height = 64;
  double radius = 4.0;
  double fov_deg = 40.0;
  double elevation_min_deg = 15.0;
  double elevation_max_deg = 45.0;
  /// Azimuth offset in units of the view spacing; 0.5 interleaves a held-out
  /// ring between training cameras.
  double azimuth_phase = 0.0;
  std::uint64_t seed = 0;
  Split split = Split::train;
};

/// First-hit flat shading of the resolved primitives; misses get the
/// background colour.
Image oracle_render(const ToySceneSpec& spec, const geometry::CameraIntrinsics& cam,
                    const geometry::Pose& pose);
Image oracle_render(const std::vector<Primitive>& prims, Color background,
                    const geometry::CameraIntrinsics& cam, const geometry::Pose& pose);
std::optional<Color> oracle_ray(const std::vector<Primitive>& prims, const geometry::Ray& ray);

/// Cameras on a ring around the origin looking inwards; scene box [-1,1]^3.
SceneDataset gen_toy_scene(const ToySceneSpec& spec, const ToyViews& views);

}  // namespace gnelf::dataio
