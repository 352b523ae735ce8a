// SPDX-License-Identifier: Apache-2.0
#include "gnelf/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <map>

#include "gnelf/error.hpp"
#include "json.hpp"

namespace gnelf {

using nlohmann::json;

std::size_t TensorInfo::count() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::uint16_t float_to_half(float value) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(value);
  const std::uint16_t sign = static_cast<std::uint16_t>((x >> 16) & 0x8000u);
  const std::uint32_t exp = (x >> 23) & 0xffu;
  std::uint32_t mant = x & 0x7fffffu;
  if (exp == 0xffu) return sign | 0x7c00u | (mant ? 0x200u : 0u);
  const int e = static_cast<int>(exp) - 127 + 15;
  if (e >= 31) return sign | 0x7c00u;
  if (e <= 0) {
    if (e < -10) return sign;
    mant |= 0x800000u;
    const int shift = 14 - e;
    std::uint32_t half = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1u);
    const std::uint32_t mid = 1u << (shift - 1);
    if (rem > mid || (rem == mid && (half & 1u))) ++half;
    return sign | static_cast<std::uint16_t>(half);
  }
  std::uint32_t half = (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
  const std::uint32_t rem = mant & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;  // may carry into the exponent
  return sign | static_cast<std::uint16_t>(half);
}

float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exp = (h >> 10) & 0x1fu;
  const std::uint32_t mant = h & 0x3ffu;
  if (exp == 0) {
    const float v = std::ldexp(static_cast<float>(mant), -24);
    return sign ? -v : v;
  }
  if (exp == 31) return std::bit_cast<float>(sign | 0x7f800000u | (mant << 13));
  return std::bit_cast<float>(sign | ((exp - 15 + 127) << 23) | (mant << 13));
}

float half_quantum(float value) {
  const float a = std::fabs(value);
  if (a < 0x1.0p-14f) return 0x1.0p-24f;
  int e = 0;
  std::frexp(a, &e);  // a = f * 2^e, f in [0.5, 1)
  return std::ldexp(1.0f, e - 1 - 10);
}

namespace {

std::size_t align8(std::size_t n) { return (n + 7) & ~std::size_t{7}; }

std::vector<std::pair<TensorInfo, std::size_t>> logical_tensors(const Model& model, bool with_optimizer) {
  // (info without offset/width, source offset in the concatenated buffer)
  std::vector<std::pair<TensorInfo, std::size_t>> out;
  const auto& g = model.grid;
  const char* planes[] = {"xy", "xz", "yz"};
  const std::size_t f = g.config().feature_dim;
  for (int p = 0; p < gridenc::kPlanes; ++p) {
    for (int l = 0; l < g.config().levels; ++l) {
      const auto& lay = g.layout(l);
      out.push_back({{std::string("grid.") + planes[p] + ".level" + std::to_string(l), {lay.entries, f}, 4, 0},
                     p * g.plane_size() + lay.offset});
    }
  }
  const std::size_t grid_n = g.parameter_count();
  for (const auto& b : model.decoder.blocks()) {
    out.push_back({{"decoder." + b.name, b.shape, 4, 0}, grid_n + b.offset});
  }
  if (with_optimizer) {
    const std::size_t dec_n = model.decoder.values().size();
    const std::size_t base = grid_n + dec_n;
    out.push_back({{"adam.grid.m", {grid_n}, 4, 0}, base});
    out.push_back({{"adam.grid.v", {grid_n}, 4, 0}, base + grid_n});
    out.push_back({{"adam.decoder.m", {dec_n}, 4, 0}, base + 2 * grid_n});
    out.push_back({{"adam.decoder.v", {dec_n}, 4, 0}, base + 2 * grid_n + dec_n});
  }
  return out;
}

json intrinsics_json(const geometry::CameraIntrinsics& c) {
  return {{"width", c.width}, {"height", c.height}, {"focal", c.focal}, {"cx", c.cx}, {"cy", c.cy}};
}

}  // namespace

std::vector<TensorInfo> tensor_manifest(const Model& model, Precision precision, bool with_optimizer) {
  std::vector<TensorInfo> out;
  std::size_t at = 0;
  for (auto& [info, src] : logical_tensors(model, with_optimizer)) {
    TensorInfo t = info;
    t.width = (precision == Precision::f16 && t.name.rfind("adam.", 0) != 0) ? 2 : 4;
    t.offset = at;
    at = align8(at + t.count() * t.width);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<std::uint8_t> encode_checkpoint(const Model& model, Precision precision,
                                            const OptimizerState* optimizer) {
  const std::size_t grid_n = model.grid.parameter_count();
  const std::size_t dec_n = model.decoder.values().size();
  if (optimizer && (optimizer->m_grid.size() != grid_n || optimizer->v_grid.size() != grid_n ||
                    optimizer->m_decoder.size() != dec_n || optimizer->v_decoder.size() != dec_n)) {
    throw ContractError("optimizer state does not match the model");
  }
  // Scalars in logical order: grid, decoder, then optimizer moments.
  auto locate = [&](std::size_t src) -> const float* {
    if (src < grid_n) return model.grid.values().data() + src;
    src -= grid_n;
    if (src < dec_n) return model.decoder.values().data() + src;
    src -= dec_n;
    if (src < grid_n) return optimizer->m_grid.data() + src;
    src -= grid_n;
    if (src < grid_n) return optimizer->v_grid.data() + src;
    src -= grid_n;
    if (src < dec_n) return optimizer->m_decoder.data() + src;
    return optimizer->v_decoder.data() + (src - dec_n);
  };

  const auto logical = logical_tensors(model, optimizer != nullptr);
  const auto manifest = tensor_manifest(model, precision, optimizer != nullptr);
  json header;
  header["version"] = kCheckpointVersion;
  header["precision"] = precision == Precision::f16 ? "f16" : "f32";
  header["config"] = json::parse(config_to_text(model.config));
  header["intrinsics"] = intrinsics_json(model.intrinsics);
  header["tensors"] = json::array();
  std::size_t payload = 0;
  for (const auto& t : manifest) {
    header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"width", t.width}, {"offset", t.offset}});
    payload = align8(t.offset + t.count() * t.width);
  }
  header["payload_bytes"] = payload;
  if (optimizer) {
    header["optimizer"] = {{"step", optimizer->step}, {"t_grid", optimizer->t_grid},
                           {"t_decoder", optimizer->t_decoder}};
  }
  const std::string text = header.dump();
  const std::size_t start = align8(9 + text.size());
  std::vector<std::uint8_t> out(start + payload, 0);
  std::memcpy(out.data(), kCheckpointMagic, 5);
  const auto len = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out[5 + i] = static_cast<std::uint8_t>(len >> (8 * i));
  std::memcpy(out.data() + 9, text.data(), text.size());
  for (std::size_t k = 0; k < manifest.size(); ++k) {
    const auto& t = manifest[k];
    const float* src = locate(logical[k].second);
    std::uint8_t* dst = out.data() + start + t.offset;
    for (std::size_t i = 0; i < t.count(); ++i) {
      if (t.width == 4) {
        const auto bits = std::bit_cast<std::uint32_t>(src[i]);
        for (int b = 0; b < 4; ++b) dst[4 * i + b] = static_cast<std::uint8_t>(bits >> (8 * b));
      } else {
        const auto bits = float_to_half(src[i]);
        dst[2 * i] = static_cast<std::uint8_t>(bits);
        dst[2 * i + 1] = static_cast<std::uint8_t>(bits >> 8);
      }
    }
  }
  return out;
}

LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 9 || std::memcmp(bytes.data(), kCheckpointMagic, 5) != 0) {
    throw LoadError("checkpoint: bad magic (not a GNLF1 file)");
  }
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[5 + i]) << (8 * i);
  if (len > bytes.size() - 9) throw LoadError("checkpoint: header length exceeds file size");
  json header;
  try {
    header = json::parse(bytes.begin() + 9, bytes.begin() + 9 + len);
  } catch (const json::exception& e) {
    throw LoadError(std::string("checkpoint: header is not valid JSON: ") + e.what());
  }
  const std::size_t start = align8(9 + static_cast<std::size_t>(len));
  try {
    if (header.at("version").get<int>() != kCheckpointVersion) {
      throw LoadError("checkpoint: unsupported version " + header.at("version").dump());
    }
    PresetConfig cfg;
    try {
      cfg = config_from_text(header.at("config").dump());
    } catch (const ConfigError& e) {
      throw LoadError(std::string("checkpoint: config: ") + e.what());
    }
    const auto& in = header.at("intrinsics");
    geometry::CameraIntrinsics cam{in.at("width").get<int>(), in.at("height").get<int>(),
                                   in.at("focal").get<double>(), in.at("cx").get<double>(),
                                   in.at("cy").get<double>()};
    try {
      cam.validate();
    } catch (const InputDomainError& e) {
      throw LoadError(std::string("checkpoint: intrinsics: ") + e.what());
    }
    const std::string prec = header.at("precision").get<std::string>();
    if (prec != "f32" && prec != "f16") throw LoadError("checkpoint: unknown precision " + prec);
    const std::size_t payload = header.at("payload_bytes").get<std::size_t>();
    const std::size_t have = bytes.size() > start ? bytes.size() - start : 0;
    if (have < payload) {
      // Name the first tensor the cut runs through, or the last intact one
      // when only padding is missing.
      std::string inside, after;
      std::size_t first = payload, last_end = 0;
      for (const auto& node : header.at("tensors")) {
        std::size_t count = 1;
        for (auto d : node.at("shape")) count *= d.get<std::size_t>();
        const std::size_t off = node.at("offset").get<std::size_t>();
        const std::size_t end = off + count * node.at("width").get<std::size_t>();
        const std::string name = node.at("name").get<std::string>();
        if (end > have && off < first) {
          first = off;
          inside = name;
        } else if (end <= have && end >= last_end) {
          last_end = end;
          after = name;
        }
      }
      std::string where;
      if (!inside.empty()) where = " inside tensor '" + inside + "'";
      else if (!after.empty()) where = " after tensor '" + after + "'";
      throw LoadError("checkpoint: file truncated" + where + " (" + std::to_string(have) + " of " +
                      std::to_string(payload) + " payload bytes)");
    }
    if (have != payload) throw LoadError("checkpoint: trailing bytes after the payload");

    LoadedCheckpoint out{Model::empty(cfg, cam), std::nullopt,
                         prec == "f16" ? Precision::f16 : Precision::f32};
    const bool with_opt = header.contains("optimizer");
    if (with_opt) {
      OptimizerState st;
      st.step = header["optimizer"].at("step").get<std::uint64_t>();
      st.t_grid = header["optimizer"].at("t_grid").get<std::uint64_t>();
      st.t_decoder = header["optimizer"].at("t_decoder").get<std::uint64_t>();
      st.m_grid.resize(out.model.grid.parameter_count());
      st.v_grid.resize(st.m_grid.size());
      st.m_decoder.resize(out.model.decoder.values().size());
      st.v_decoder.resize(st.m_decoder.size());
      out.optimizer = std::move(st);
    }
    const auto logical = logical_tensors(out.model, with_opt);
    std::map<std::string, std::size_t> expected;
    for (std::size_t k = 0; k < logical.size(); ++k) expected[logical[k].first.name] = k;

    const std::size_t grid_n = out.model.grid.parameter_count();
    const std::size_t dec_n = out.model.decoder.values().size();
    auto target = [&](std::size_t src) -> float* {
      if (src < grid_n) return out.model.grid.values().data() + src;
      src -= grid_n;
      if (src < dec_n) return out.model.decoder.values().data() + src;
      src -= dec_n;
      auto& st = *out.optimizer;
      if (src < grid_n) return st.m_grid.data() + src;
      src -= grid_n;
      if (src < grid_n) return st.v_grid.data() + src;
      src -= grid_n;
      if (src < dec_n) return st.m_decoder.data() + src;
      return st.v_decoder.data() + (src - dec_n);
    };

    const auto& tensors = header.at("tensors");
    if (!tensors.is_array()) throw LoadError("checkpoint: tensor manifest is not a list");
    std::vector<bool> seen(logical.size(), false);
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (const auto& node : tensors) {
      TensorInfo t;
      t.name = node.at("name").get<std::string>();
      const auto it = expected.find(t.name);
      if (it == expected.end()) throw LoadError("checkpoint: unexpected tensor '" + t.name + "'");
      const auto& want = logical[it->second].first;
      if (seen[it->second]) throw LoadError("checkpoint: tensor '" + t.name + "' listed twice");
      seen[it->second] = true;
      t.shape = node.at("shape").get<std::vector<std::size_t>>();
      t.width = node.at("width").get<int>();
      t.offset = node.at("offset").get<std::size_t>();
      if (t.shape != want.shape) throw LoadError("checkpoint: tensor '" + t.name + "' has the wrong shape");
      if (t.width != 2 && t.width != 4) throw LoadError("checkpoint: tensor '" + t.name + "' has scalar width " + std::to_string(t.width));
      const std::size_t size = t.count() * t.width;
      if (t.offset % 8 != 0 || t.offset > payload || size > payload - t.offset) {
        throw LoadError("checkpoint: tensor '" + t.name + "' lies outside the payload");
      }
      for (const auto& [a, b] : spans) {
        if (t.offset < b && a < t.offset + size) throw LoadError("checkpoint: tensor '" + t.name + "' overlaps another tensor");
      }
      spans.emplace_back(t.offset, t.offset + size);
      float* dst = target(logical[it->second].second);
      const std::uint8_t* src = bytes.data() + start + t.offset;
      for (std::size_t i = 0; i < t.count(); ++i) {
        float v;
        if (t.width == 4) {
          std::uint32_t bits = 0;
          for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(src[4 * i + b]) << (8 * b);
          v = std::bit_cast<float>(bits);
        } else {
          v = half_to_float(static_cast<std::uint16_t>(src[2 * i] | (src[2 * i + 1] << 8)));
        }
        if (!std::isfinite(v)) throw LoadError("checkpoint: tensor '" + t.name + "' holds a non-finite value");
        dst[i] = v;
      }
    }
    for (std::size_t k = 0; k < logical.size(); ++k) {
      if (!seen[k]) throw LoadError("checkpoint: tensor '" + logical[k].first.name + "' is missing");
    }
    return out;
  } catch (const json::exception& e) {
    throw LoadError(std::string("checkpoint: malformed header: ") + e.what());
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path, Precision precision,
                     const OptimizerState* optimizer) {
  write_file_atomic(path, encode_checkpoint(model, precision, optimizer));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

std::string fnv1a_hex(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace gnelf
