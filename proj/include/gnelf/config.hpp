// SPDX-License-Identifier: Apache-2.0
//
// Preset registry and configuration files.
//
// A config file is a JSON object whose nested keys mirror PresetConfig, e.g.
//
//   {"preset": "tiny-test", "train": {"steps": 5000, "lr_grid": 0.02}}
//
// Keys are applied on top of the named preset (default "small"); unknown keys
// are rejected. Command-line overrides use the flattened form
// "train.steps=5000".
#pragma once
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "gnelf/decoder.hpp"
#include "gnelf/geometry.hpp"
#include "gnelf/gridenc.hpp"
#include "gnelf/image.hpp"

namespace gnelf {

enum class SceneMode { aabb_360, ndc_forward };

std::string to_string(SceneMode mode);

struct TrainConfig {
  int batch_size = 256;
  int steps = 20000;
  float lr_grid = 1e-2f;
  float lr_decoder = 1e-3f;
  /// Learning-rate multiplier reached at the last step (exponential decay).
  float lr_decay = 0.1f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  int val_every = 1000;
  int val_views = 4;
  int val_scale = 2;
  int checkpoint_every = 5000;
  int log_every = 100;
};

struct PresetConfig {
  std::string name = "small";
  gridenc::GridConfig grid;
  decoder::DecoderConfig decoder;  // input_dim is derived from grid
  int samples = 256;
  SceneMode mode = SceneMode::aabb_360;
  Color background{1.0f, 1.0f, 1.0f};
  geometry::Aabb aabb{{-1.5, -1.5, -1.5}, {1.5, 1.5, 1.5}};
  /// Near plane for forward-facing scenes.
  double near = 1.0;
  int downsample = 1;
  float grid_init_scale = 1e-4f;
  TrainConfig train;
  std::uint64_t seed = 0;
  /// Dotted keys that were set explicitly by a file or override.
  std::set<std::string> explicit_keys;

  bool is_explicit(const std::string& key) const { return explicit_keys.count(key) != 0; }
  /// Recomputes decoder.input_dim and checks every field.
  void finalize();
  void validate() const;
};

/// small, medium, large or tiny-test.
PresetConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Applies one dotted key. `value` is JSON text; a bare word that is not
/// valid JSON is taken as a string.
void apply_setting(PresetConfig& cfg, const std::string& key, const std::string& value);
/// "key=value" form.
void apply_override(PresetConfig& cfg, const std::string& assignment);

PresetConfig config_from_text(const std::string& json_text);
PresetConfig load_config(const std::filesystem::path& path);
/// Preset (from file or default) plus overrides, finalized.
PresetConfig resolve_config(const std::filesystem::path* path,
                            const std::vector<std::string>& overrides);

/// Full nested JSON of every field; config_from_text(config_to_text(c))
/// reproduces c.
std::string config_to_text(const PresetConfig& cfg, int indent = -1);

}  // namespace gnelf
