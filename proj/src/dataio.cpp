// SPDX-License-Identifier: Apache-2.0
#include "gnelf/dataio.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "gnelf/error.hpp"
#include "json.hpp"
#include "rng.hpp"

namespace gnelf::dataio {

using geometry::Aabb;
using geometry::CameraIntrinsics;
using geometry::Pose;
using geometry::Ray;
using geometry::Vec3;
using nlohmann::json;

std::string to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

void SceneDataset::validate() const {
  intrinsics.validate();
  aabb.validate();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (f.image.width != intrinsics.width || f.image.height != intrinsics.height) {
      throw LoadError("frame " + std::to_string(i) + " does not match the dataset resolution");
    }
    for (float v : f.image.pixels) {
      if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
        throw LoadError("frame " + std::to_string(i) + " has pixels outside [0,1]");
      }
    }
    try {
      f.pose.validate();
    } catch (const InputDomainError& e) {
      throw LoadError("frame " + std::to_string(i) + ": " + e.what());
    }
  }
}

namespace {

json read_json(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

Pose parse_pose(const json& node, const std::string& context) {
  std::array<double, 16> rows{};
  try {
    if (node.is_array() && node.size() == 4) {
      for (int r = 0; r < 4; ++r) {
        if (!node[r].is_array() || node[r].size() != 4) throw LoadError("row is not 4 numbers");
        for (int c = 0; c < 4; ++c) rows[r * 4 + c] = node[r][c].get<double>();
      }
    } else if (node.is_array() && node.size() == 16) {
      for (int i = 0; i < 16; ++i) rows[i] = node[i].get<double>();
    } else {
      throw LoadError("expected a 4x4 matrix");
    }
    Pose pose = Pose::from_rows(rows);
    pose.validate();
    return pose;
  } catch (const json::exception& e) {
    throw LoadError(context + ": malformed transform matrix: " + e.what());
  } catch (const std::exception& e) {
    throw LoadError(context + ": malformed transform matrix: " + e.what());
  }
}

Color parse_color(const json& node, const std::string& context) {
  if (!node.is_array() || node.size() != 3) throw LoadError(context + ": expected 3 numbers");
  return {node[0].get<float>(), node[1].get<float>(), node[2].get<float>()};
}

Vec3 parse_vec3(const json& node, const std::string& context) {
  if (!node.is_array() || node.size() != 3) throw LoadError(context + ": expected 3 numbers");
  return {node[0].get<double>(), node[1].get<double>(), node[2].get<double>()};
}

std::filesystem::path resolve_image(const std::filesystem::path& dir, const std::string& file) {
  std::filesystem::path p = dir / file;
  if (!p.has_extension()) p += ".png";
  return p.lexically_normal();
}

}  // namespace

SceneDataset load_blender_dataset(const std::filesystem::path& dir, Split split,
                                  const BlenderOptions& options) {
  const auto transforms = dir / ("transforms_" + to_string(split) + ".json");
  if (!std::filesystem::exists(transforms)) {
    throw LoadError(transforms.string() + ": missing transforms file");
  }
  const json doc = read_json(transforms);
  const std::string ctx = transforms.string();
  if (!doc.contains("camera_angle_x") || !doc["camera_angle_x"].is_number()) {
    throw LoadError(ctx + ": missing numeric camera_angle_x");
  }
  if (!doc.contains("frames") || !doc["frames"].is_array()) throw LoadError(ctx + ": missing frames");
  const double angle = doc["camera_angle_x"].get<double>();
  if (!(angle > 0.0 && angle < std::numbers::pi)) throw LoadError(ctx + ": camera_angle_x out of range");

  SceneDataset data;
  data.split = split;
  data.background = options.background;
  data.aabb = options.aabb;
  if (doc.contains("background")) data.background = parse_color(doc["background"], ctx + " background");
  if (doc.contains("aabb")) {
    data.aabb = {parse_vec3(doc["aabb"].at(0), ctx + " aabb"), parse_vec3(doc["aabb"].at(1), ctx + " aabb")};
  }

  int full_w = 0, full_h = 0;
  const auto& frames = doc["frames"];
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& fr = frames[i];
    const std::string fctx = ctx + " frame " + std::to_string(i);
    if (!fr.contains("file_path") || !fr["file_path"].is_string()) {
      throw LoadError(fctx + ": missing file_path");
    }
    if (!fr.contains("transform_matrix")) throw LoadError(fctx + ": missing transform_matrix");
    Frame frame;
    frame.pose = parse_pose(fr["transform_matrix"], fctx);
    Image img = read_png(resolve_image(dir, fr["file_path"].get<std::string>()), data.background);
    if (i == 0) {
      full_w = img.width;
      full_h = img.height;
    } else if (img.width != full_w || img.height != full_h) {
      throw LoadError(fctx + ": image size differs from the first frame");
    }
    try {
      frame.image = downsample(img, options.downsample);
    } catch (const InputDomainError& e) {
      throw LoadError(fctx + ": " + e.what());
    }
    data.frames.push_back(std::move(frame));
  }
  if (data.frames.empty()) throw LoadError(ctx + ": no frames");

  const double focal = 0.5 * full_w / std::tan(0.5 * angle);
  data.intrinsics = CameraIntrinsics::centered(full_w, full_h, focal).scaled(options.downsample);
  data.validate();
  return data;
}

void write_blender_dataset(const SceneDataset& data, const std::filesystem::path& dir) {
  const std::string split = to_string(data.split);
  json doc;
  doc["camera_angle_x"] = 2.0 * std::atan(0.5 * data.intrinsics.width / data.intrinsics.focal);
  doc["background"] = {data.background[0], data.background[1], data.background[2]};
  doc["aabb"] = {{data.aabb.min.x, data.aabb.min.y, data.aabb.min.z},
                 {data.aabb.max.x, data.aabb.max.y, data.aabb.max.z}};
  doc["frames"] = json::array();
  for (std::size_t i = 0; i < data.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "r_%03zu", i);
    const std::string rel = "./" + split + "/" + name;
    write_png(data.frames[i].image, dir / split / (std::string(name) + ".png"));
    json rows = json::array();
    for (int r = 0; r < 4; ++r) {
      rows.push_back({data.frames[i].pose.m[r * 4], data.frames[i].pose.m[r * 4 + 1],
                      data.frames[i].pose.m[r * 4 + 2], data.frames[i].pose.m[r * 4 + 3]});
    }
    doc["frames"].push_back({{"file_path", rel}, {"transform_matrix", rows}});
  }
  write_file_atomic(dir / ("transforms_" + split + ".json"), doc.dump(2) + "\n");
}

SceneDataset load_camera_set(const std::filesystem::path& json_path, int downsample_factor,
                             Color background) {
  const json doc = read_json(json_path);
  const std::string ctx = json_path.string();
  SceneDataset data;
  data.background = background;
  data.aabb = {{-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}};
  try {
    const auto& in = doc.at("intrinsics");
    CameraIntrinsics cam;
    cam.width = in.at("width").get<int>();
    cam.height = in.at("height").get<int>();
    cam.focal = in.at("focal").get<double>();
    cam.cx = in.value("cx", 0.5 * cam.width);
    cam.cy = in.value("cy", 0.5 * cam.height);
    cam.validate();
    data.intrinsics = cam.scaled(downsample_factor);
    data.near = doc.at("near").get<double>();
    if (!(data.near > 0.0)) throw LoadError("near must be positive");
    if (doc.contains("background")) data.background = parse_color(doc["background"], ctx);
    const auto& frames = doc.at("frames");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const std::string fctx = ctx + " frame " + std::to_string(i);
      Frame frame;
      frame.pose = parse_pose(frames[i].at("pose"), fctx);
      Image img = read_png(resolve_image(json_path.parent_path(), frames[i].at("image").get<std::string>()),
                           data.background);
      if (img.width != cam.width || img.height != cam.height) {
        throw LoadError(fctx + ": image size does not match intrinsics");
      }
      frame.image = downsample(img, downsample_factor);
      data.frames.push_back(std::move(frame));
    }
  } catch (const json::exception& e) {
    throw LoadError(ctx + ": " + e.what());
  } catch (const InputDomainError& e) {
    throw LoadError(ctx + ": " + e.what());
  }
  if (data.frames.empty()) throw LoadError(ctx + ": no frames");
  data.validate();
  return data;
}

std::optional<double> intersect_primitive(const Primitive& prim, const Ray& ray) {
  constexpr double eps = 1e-9;
  if (prim.kind == PrimitiveKind::box) {
    const Aabb box{prim.center - prim.half_extent, prim.center + prim.half_extent};
    const auto hit = geometry::intersect_aabb(ray, box);
    if (!hit) return std::nullopt;
    if (hit->t_near > eps) return hit->t_near;
    return hit->t_far > eps ? std::optional<double>(hit->t_far) : std::nullopt;
  }
  const Vec3 oc = ray.origin - prim.center;
  const double b = geometry::dot(oc, ray.direction);
  const double c = geometry::dot(oc, oc) - prim.radius * prim.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  if (-b - s > eps) return -b - s;
  if (-b + s > eps) return -b + s;
  return std::nullopt;
}

std::vector<Primitive> ToySceneSpec::resolve() const {
  if (!primitives.empty()) return primitives;
  std::mt19937_64 rng(seed);
  std::vector<Primitive> out;
  for (int i = 0; i < primitive_count; ++i) {
    Primitive p;
    p.kind = kind ? *kind : (i % 2 == 0 ? PrimitiveKind::box : PrimitiveKind::sphere);
    Vec3 half;
    if (p.kind == PrimitiveKind::box) {
      half = {detail::uniform(rng, 0.25, 0.45), detail::uniform(rng, 0.25, 0.45),
              detail::uniform(rng, 0.25, 0.45)};
      p.half_extent = half;
    } else {
      p.radius = detail::uniform(rng, 0.25, 0.45);
      half = {p.radius, p.radius, p.radius};
    }
    for (int a = 0; a < 3; ++a) {
      p.center[a] = detail::uniform(rng, bounds.min[a] + half[a], bounds.max[a] - half[a]);
    }
    for (auto& c : p.color) {
      const double code = std::round(detail::uniform(rng, 0.1, 0.95) * 255.0);
      c = static_cast<float>(code / 255.0);
    }
    out.push_back(p);
  }
  return out;
}

std::optional<Color> oracle_ray(const std::vector<Primitive>& prims, const Ray& ray) {
  std::optional<double> best;
  std::optional<Color> color;
  for (const auto& p : prims) {
    const auto t = intersect_primitive(p, ray);
    if (t && (!best || *t < *best)) {
      best = t;
      color = p.color;
    }
  }
  return color;
}

Image oracle_render(const std::vector<Primitive>& prims, Color background, const CameraIntrinsics& cam,
                    const Pose& pose) {
  cam.validate();
  Image img(cam.width, cam.height, background);
  for (int j = 0; j < cam.height; ++j) {
    for (int i = 0; i < cam.width; ++i) {
      const auto c = oracle_ray(prims, geometry::generate_ray(cam, pose, i, j));
      if (c) {
        float* px = img.at(i, j);
        px[0] = (*c)[0];
        px[1] = (*c)[1];
        px[2] = (*c)[2];
      }
    }
  }
  return img;
}

Image oracle_render(const ToySceneSpec& spec, const CameraIntrinsics& cam, const Pose& pose) {
  return oracle_render(spec.resolve(), spec.background, cam, pose);
}

SceneDataset gen_toy_scene(const ToySceneSpec& spec, const ToyViews& views) {
  if (views.count < 1) throw InputDomainError("toy scene needs at least one view");
  const double focal = 0.5 * views.width / std::tan(0.5 * views.fov_deg * std::numbers::pi / 180.0);
  SceneDataset data;
  data.intrinsics = CameraIntrinsics::centered(views.width, views.height, focal);
  data.aabb = {{-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}};
  data.background = spec.background;
  data.split = views.split;
  const auto prims = spec.resolve();
  std::mt19937_64 rng(detail::mix_seed(views.seed, 0x7679657773ull));
  for (int k = 0; k < views.count; ++k) {
    geometry::Orbit orbit;
    orbit.azimuth_deg = 360.0 * (k + views.azimuth_phase) / views.count;
    orbit.elevation_deg = detail::uniform(rng, views.elevation_min_deg, views.elevation_max_deg);
    orbit.radius = views.radius;
    Frame frame;
    frame.pose = geometry::orbit_pose(orbit);
    frame.image = oracle_render(prims, spec.background, data.intrinsics, frame.pose);
    data.frames.push_back(std::move(frame));
  }
  return data;
}

}  // namespace gnelf::dataio
