// SPDX-License-Identifier: Apache-2.0
#include "gnelf/config.hpp"

#include <cmath>
#include <functional>
#include <map>

#include "gnelf/error.hpp"
#include "gnelf/image.hpp"
#include "json.hpp"

namespace gnelf {

using nlohmann::json;

std::string to_string(SceneMode mode) {
  return mode == SceneMode::aabb_360 ? "aabb-360" : "ndc-forward";
}

namespace {

SceneMode parse_mode(const std::string& s) {
  if (s == "aabb-360") return SceneMode::aabb_360;
  if (s == "ndc-forward") return SceneMode::ndc_forward;
  throw ConfigError("scene.mode must be aabb-360 or ndc-forward, got '" + s + "'");
}

template <typename T>
T as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && v.get<std::int64_t>() < 0) throw ConfigError("");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("bad value for " + key + ": " + v.dump());
  }
}

geometry::Vec3 as_vec3(const json& v, const std::string& key) {
  if (!v.is_array() || v.size() != 3) throw ConfigError(key + " must be a list of 3 numbers");
  return {as<double>(v[0], key), as<double>(v[1], key), as<double>(v[2], key)};
}

Color as_color(const json& v, const std::string& key) {
  const auto p = as_vec3(v, key);
  return {static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z)};
}

json vec_json(geometry::Vec3 v) { return json::array({v.x, v.y, v.z}); }
json color_json(Color c) { return json::array({c[0], c[1], c[2]}); }

using Setter = std::function<void(PresetConfig&, const json&, const std::string&)>;
using Getter = std::function<json(const PresetConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

template <typename T, typename Ref>
Field scalar(Ref ref) {
  return {[ref](PresetConfig& c, const json& v, const std::string& k) { ref(c) = as<T>(v, k); },
          [ref](const PresetConfig& c) { return json(ref(const_cast<PresetConfig&>(c))); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["seed"] = scalar<std::uint64_t>([](PresetConfig& c) -> auto& { return c.seed; });
    t["samples"] = scalar<int>([](PresetConfig& c) -> auto& { return c.samples; });
    t["scene.mode"] = {
        [](PresetConfig& c, const json& v, const std::string& k) {
          if (!v.is_string()) throw ConfigError(k + " must be a string");
          c.mode = parse_mode(v.get<std::string>());
        },
        [](const PresetConfig& c) { return json(to_string(c.mode)); }};
    t["scene.background"] = {
        [](PresetConfig& c, const json& v, const std::string& k) { c.background = as_color(v, k); },
        [](const PresetConfig& c) { return color_json(c.background); }};
    t["scene.aabb_min"] = {
        [](PresetConfig& c, const json& v, const std::string& k) { c.aabb.min = as_vec3(v, k); },
        [](const PresetConfig& c) { return vec_json(c.aabb.min); }};
    t["scene.aabb_max"] = {
        [](PresetConfig& c, const json& v, const std::string& k) { c.aabb.max = as_vec3(v, k); },
        [](const PresetConfig& c) { return vec_json(c.aabb.max); }};
    t["scene.near"] = scalar<double>([](PresetConfig& c) -> auto& { return c.near; });
    t["scene.downsample"] = scalar<int>([](PresetConfig& c) -> auto& { return c.downsample; });
    t["grid.levels"] = scalar<int>([](PresetConfig& c) -> auto& { return c.grid.levels; });
    t["grid.r_min"] = scalar<int>([](PresetConfig& c) -> auto& { return c.grid.r_min; });
    t["grid.r_max"] = scalar<int>([](PresetConfig& c) -> auto& { return c.grid.r_max; });
    t["grid.feature_dim"] = scalar<int>([](PresetConfig& c) -> auto& { return c.grid.feature_dim; });
    t["grid.table_cap"] =
        scalar<std::uint32_t>([](PresetConfig& c) -> auto& { return c.grid.table_cap; });
    t["grid.init_scale"] = scalar<float>([](PresetConfig& c) -> auto& { return c.grid_init_scale; });
    t["decoder.hidden_size"] =
        scalar<int>([](PresetConfig& c) -> auto& { return c.decoder.hidden_size; });
    t["decoder.num_layers"] =
        scalar<int>([](PresetConfig& c) -> auto& { return c.decoder.num_layers; });
    t["decoder.mlp_hidden"] =
        scalar<int>([](PresetConfig& c) -> auto& { return c.decoder.mlp_hidden; });
    t["train.batch_size"] = scalar<int>([](PresetConfig& c) -> auto& { return c.train.batch_size; });
    t["train.steps"] = scalar<int>([](PresetConfig& c) -> auto& { return c.train.steps; });
    t["train.lr_grid"] = scalar<float>([](PresetConfig& c) -> auto& { return c.train.lr_grid; });
    t["train.lr_decoder"] = scalar<float>([](PresetConfig& c) -> auto& { return c.train.lr_decoder; });
    t["train.lr_decay"] = scalar<float>([](PresetConfig& c) -> auto& { return c.train.lr_decay; });
    t["train.beta1"] = scalar<float>([](PresetConfig& c) -> auto& { return c.train.beta1; });
    t["train.beta2"] = scalar<float>([](PresetConfig& c) -> auto& { return c.train.beta2; });
    t["train.eps"] = scalar<float>([](PresetConfig& c) -> auto& { return c.train.eps; });
    t["train.val_every"] = scalar<int>([](PresetConfig& c) -> auto& { return c.train.val_every; });
    t["train.val_views"] = scalar<int>([](PresetConfig& c) -> auto& { return c.train.val_views; });
    t["train.val_scale"] = scalar<int>([](PresetConfig& c) -> auto& { return c.train.val_scale; });
    t["train.checkpoint_every"] =
        scalar<int>([](PresetConfig& c) -> auto& { return c.train.checkpoint_every; });
    t["train.log_every"] = scalar<int>([](PresetConfig& c) -> auto& { return c.train.log_every; });
    return t;
  }();
  return table;
}

void set_field(PresetConfig& cfg, const std::string& key, const json& value) {
  if (key == "preset" || key == "name") {
    throw ConfigError("'" + key + "' can only appear at the top of a config file");
  }
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, value, key);
  cfg.explicit_keys.insert(key);
}

void flatten(const json& node, const std::string& prefix,
             std::vector<std::pair<std::string, json>>& out) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten(*it, key, out);
    } else {
      out.emplace_back(key, *it);
    }
  }
}

}  // namespace

std::vector<std::string> preset_names() { return {"small", "medium", "large", "tiny-test"}; }

PresetConfig preset(const std::string& name) {
  PresetConfig c;
  c.name = name;
  if (name == "small" || name == "medium") {
    c.grid = {8, 16, 1024, 2, 1u << 14};
    c.decoder.hidden_size = name == "small" ? 32 : 128;
    c.decoder.num_layers = 2;
    c.decoder.mlp_hidden = 2 * c.decoder.hidden_size;
    c.downsample = 2;
  } else if (name == "large") {
    c.grid = {16, 16, 2048, 2, 1u << 16};
    c.decoder.hidden_size = 128;
    c.decoder.num_layers = 3;
    c.decoder.mlp_hidden = 256;
    c.downsample = 2;
  } else if (name == "tiny-test") {
    c.grid = {4, 16, 128, 2, 1u << 12};
    c.decoder.hidden_size = 32;
    c.decoder.num_layers = 2;
    c.decoder.mlp_hidden = 64;
    c.samples = 64;
    c.background = {0.0f, 0.0f, 0.0f};
    c.aabb = {{-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}};
    c.train.batch_size = 128;
    c.train.steps = 20000;
    c.train.val_scale = 1;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  c.finalize();
  return c;
}

void PresetConfig::finalize() {
  decoder.input_dim = grid.point_feature_width() + gridenc::kShDim;
  validate();
}

void PresetConfig::validate() const {
  try {
    grid.validate();
    decoder.validate();
    aabb.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (decoder.input_dim != grid.point_feature_width() + gridenc::kShDim) {
    throw ConfigError("decoder input width does not match the grid feature width");
  }
  if (samples < 1) throw ConfigError("samples must be >= 1");
  for (float v : background) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ConfigError("scene.background must lie in [0,1]");
  }
  if (!(near > 0.0)) throw ConfigError("scene.near must be positive");
  if (downsample < 1) throw ConfigError("scene.downsample must be >= 1");
  if (!(grid_init_scale >= 0.0f)) throw ConfigError("grid.init_scale must be >= 0");
  const auto& t = train;
  if (t.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (t.steps < 0) throw ConfigError("train.steps must be >= 0");
  if (!(t.lr_grid > 0.0f) || !(t.lr_decoder > 0.0f)) throw ConfigError("learning rates must be positive");
  if (!(t.lr_decay > 0.0f && t.lr_decay <= 1.0f)) throw ConfigError("train.lr_decay must lie in (0,1]");
  if (!(t.beta1 >= 0.0f && t.beta1 < 1.0f) || !(t.beta2 >= 0.0f && t.beta2 < 1.0f)) {
    throw ConfigError("Adam betas must lie in [0,1)");
  }
  if (!(t.eps > 0.0f)) throw ConfigError("train.eps must be positive");
  if (t.val_every < 0 || t.val_views < 0 || t.checkpoint_every < 0 || t.log_every < 0) {
    throw ConfigError("train cadences must be >= 0");
  }
  if (t.val_scale != 1 && t.val_scale != 2 && t.val_scale != 4 && t.val_scale != 8) {
    throw ConfigError("train.val_scale must be 1, 2, 4 or 8");
  }
}

void apply_setting(PresetConfig& cfg, const std::string& key, const std::string& value) {
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;
  }
  set_field(cfg, key, parsed);
  if (key == "scene.mode" && cfg.mode == SceneMode::ndc_forward && !cfg.is_explicit("samples")) {
    cfg.samples = 128;
  }
}

void apply_override(PresetConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  apply_setting(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

PresetConfig config_from_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  std::string base = "small";
  for (const char* key : {"preset", "name"}) {
    if (doc.contains(key)) {
      if (!doc[key].is_string()) throw ConfigError(std::string(key) + " must be a string");
      base = doc[key].get<std::string>();
      doc.erase(key);
    }
  }
  PresetConfig cfg = preset(base);
  std::vector<std::pair<std::string, json>> flat;
  flatten(doc, "", flat);
  for (const auto& [key, value] : flat) set_field(cfg, key, value);
  if (cfg.mode == SceneMode::ndc_forward && !cfg.is_explicit("samples")) cfg.samples = 128;
  cfg.finalize();
  return cfg;
}

PresetConfig load_config(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  try {
    return config_from_text(std::string(bytes.begin(), bytes.end()));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

PresetConfig resolve_config(const std::filesystem::path* path,
                            const std::vector<std::string>& overrides) {
  PresetConfig cfg = path ? load_config(*path) : preset("small");
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.finalize();
  return cfg;
}

std::string config_to_text(const PresetConfig& cfg, int indent) {
  json doc = json::object();
  doc["preset"] = cfg.name;
  for (const auto& [key, field] : fields()) {
    json* node = &doc;
    std::size_t start = 0;
    for (std::size_t dot = key.find('.'); dot != std::string::npos; dot = key.find('.', start)) {
      node = &(*node)[key.substr(start, dot - start)];
      start = dot + 1;
    }
    (*node)[key.substr(start)] = field.get(cfg);
  }
  return doc.dump(indent);
}

}  // namespace gnelf
