// SPDX-License-Identifier: Apache-2.0
//
// Recurrent ray colour decoder: a stack of LSTM cells walks the per-point
// feature sequence near to far, with the encoded view direction appended to
// every step's input, and a two-layer head maps the final top-layer hidden
// state to RGB.
//
// Gate blocks are stored in i, f, g, o order. Each layer owns an input
// matrix W (4h x in), a recurrent matrix U (4h x h) and two bias vectors,
// mirroring the usual framework layout so weights are portable.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gnelf::decoder {

using Rgb = std::array<float, 3>;

struct DecoderConfig {
  int input_dim = 64;  // point feature width + direction encoding width
  int hidden_size = 32;
  int num_layers = 2;
  int mlp_hidden = 64;

  void validate() const;
};

struct LayerOffsets {
  std::size_t w = 0;
  std::size_t u = 0;
  std::size_t b_ih = 0;
  std::size_t b_hh = 0;
  int in_dim = 0;
};

/// Scalar offsets of every block inside one flat parameter (or gradient)
/// buffer.
struct DecoderLayout {
  std::vector<LayerOffsets> layers;
  std::size_t head_w1 = 0;
  std::size_t head_b1 = 0;
  std::size_t head_w2 = 0;
  std::size_t head_b2 = 0;
  std::size_t total = 0;

  explicit DecoderLayout(const DecoderConfig& cfg);
};

/// sum_l 4h(in_l + h + 2) + (h*m + m) + (3m + 3).
std::size_t parameter_count(const DecoderConfig& cfg);

struct NamedBlock {
  std::string name;
  std::size_t offset;
  std::vector<std::size_t> shape;
};

class DecoderParams {
 public:
  explicit DecoderParams(DecoderConfig cfg);

  const DecoderConfig& config() const { return cfg_; }
  const DecoderLayout& layout() const { return layout_; }
  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  /// Block manifest in storage order, e.g. "layer0.w_ih".
  std::vector<NamedBlock> blocks() const;

 private:
  DecoderConfig cfg_;
  DecoderLayout layout_;
  std::vector<float> values_;
};

/// Recurrent weights uniform in +-1/sqrt(h), head weights uniform in
/// +-1/sqrt(fan_in), forget-gate input bias 1, other biases 0.
DecoderParams init_decoder(const DecoderConfig& cfg, std::uint64_t seed);

/// One LSTM step for a single vector. `x` has the layer's input width.
void lstm_cell_forward(const DecoderParams& params, int layer, std::span<const float> x,
                       std::span<const float> h_prev, std::span<const float> c_prev,
                       std::span<float> h, std::span<float> c);

/// Forward/backward engine over a batch of rays decoded in lockstep.
///
/// Tensors are ray-innermost: step inputs are [step][feature][ray], the
/// per-ray constant input (direction encoding) is [dim][ray] and colours are
/// [3][ray]. The first layer's input columns are laid out as
/// [step features | constant features].
class DecoderTape {
 public:
  /// Runs the decoder. With `record` set, every per-step activation is kept
  /// for a later backward(); otherwise only two steps of state are held.
  void forward(const DecoderParams& params, int rays, int steps,
               std::span<const float> step_inputs, std::span<const float> ray_inputs,
               std::span<float> rgb, bool record = true);

  /// Reverse-mode pass for the last recorded forward. Parameter gradients are
  /// added into `param_grad` (layout of params.values()); gradients of the
  /// step inputs are written to `step_grad` ([step][feature][ray]). The tape
  /// is consumed.
  void backward(const DecoderParams& params, std::span<const float> upstream,
                std::span<float> param_grad, std::span<float> step_grad);

  bool recorded() const { return recorded_; }
  int rays() const { return rays_; }
  int steps() const { return steps_; }
  int step_dim() const { return step_dim_; }

 private:
  float* state(std::vector<float>& buf, int t, int layer, int rows);

  int rays_ = 0;
  int steps_ = 0;
  int step_dim_ = 0;
  int ray_dim_ = 0;
  int slots_ = 0;
  bool recorded_ = false;
  int hidden_ = 0;
  int layers_ = 0;

  std::vector<float> step_inputs_;
  std::vector<float> ray_inputs_;
  std::vector<float> gates_;      // [slot][layer][4h][ray], post-activation
  std::vector<float> cell_;       // [slot][layer][h][ray]
  std::vector<float> tanh_cell_;  // [slot][layer][h][ray]
  std::vector<float> hidden_state_;  // [slot][layer][h][ray]
  std::vector<float> base_;       // [4h][ray] bias + constant-input projection, layer 0
  std::vector<float> head_pre_;   // [m][ray]
  std::vector<float> head_act_;   // [m][ray]
  std::vector<float> rgb_;        // [3][ray]
  std::vector<float> zeros_;
};

/// Decodes one ray. `features` is K x N row-major (step-major), `ray_input`
/// is the direction encoding.
Rgb decode_ray(const DecoderParams& params, std::span<const float> features, int steps,
               std::span<const float> ray_input);

struct RayGradients {
  std::vector<float> params;    // same layout as DecoderParams::values()
  std::vector<float> features;  // K x N row-major
};

/// Single-ray reverse pass for a tape recorded with rays == 1.
RayGradients decode_ray_backward(const DecoderParams& params, DecoderTape& tape,
                                 const Rgb& upstream);

}  // namespace gnelf::decoder
