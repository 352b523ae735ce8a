// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container.
//
//   bytes 0..4   "GNLF1"
//   bytes 5..8   header length n, u32 little-endian
//   bytes 9..    n bytes of UTF-8 JSON header
//   padding      zeros up to the next multiple of 8
//   payload      little-endian scalar arrays
//
// The header holds the format version, the full config, the camera
// intrinsics and a tensor manifest of {name, shape, width, offset}. Offsets
// are relative to the payload start and 8-byte aligned. Width 4 is f32,
// width 2 is IEEE binary16.
#pragma once
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gnelf/model.hpp"

namespace gnelf {

inline constexpr char kCheckpointMagic[5] = {'G', 'N', 'L', 'F', '1'};
inline constexpr int kCheckpointVersion = 1;

enum class Precision { f32, f16 };

/// Adam state for resuming a run.
struct OptimizerState {
  std::uint64_t step = 0;  // completed training steps
  std::uint64_t t_grid = 0;
  std::uint64_t t_decoder = 0;
  std::vector<float> m_grid, v_grid, m_decoder, v_decoder;
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  int width = 4;
  std::size_t offset = 0;
  std::size_t count() const;
};

struct LoadedCheckpoint {
  Model model;
  std::optional<OptimizerState> optimizer;
  Precision precision = Precision::f32;
};

/// Round-to-nearest-even binary16 conversion.
std::uint16_t float_to_half(float value);
float half_to_float(std::uint16_t bits);
/// Spacing of binary16 values around |value|.
float half_quantum(float value);

std::vector<std::uint8_t> encode_checkpoint(const Model& model, Precision precision,
                                            const OptimizerState* optimizer = nullptr);
/// Validates magic, version, manifest bounds and shapes against the embedded
/// config. Errors are LoadError and name the offending tensor when there is
/// one.
LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path, Precision precision,
                     const OptimizerState* optimizer = nullptr);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Manifest the container would carry for `model`, in payload order.
std::vector<TensorInfo> tensor_manifest(const Model& model, Precision precision,
                                        bool with_optimizer);

/// FNV-1a 64-bit digest, printed as 16 hex digits.
std::string fnv1a_hex(std::span<const std::uint8_t> bytes);

}  // namespace gnelf
