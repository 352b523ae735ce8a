// SPDX-License-Identifier: Apache-2.0
#include "gnelf/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "activations.hpp"
#include "gnelf/error.hpp"
#include "rng.hpp"

namespace gnelf::decoder {

void DecoderConfig::validate() const {
  if (hidden_size < 1 || num_layers < 1 || mlp_hidden < 1 || input_dim < 1) {
    throw InputDomainError("decoder dimensions must be positive");
  }
}

DecoderLayout::DecoderLayout(const DecoderConfig& cfg) {
  cfg.validate();
  const std::size_t h = cfg.hidden_size;
  const std::size_t m = cfg.mlp_hidden;
  std::size_t at = 0;
  for (int l = 0; l < cfg.num_layers; ++l) {
    LayerOffsets lo;
    lo.in_dim = l == 0 ? cfg.input_dim : cfg.hidden_size;
    lo.w = at;
    at += 4 * h * lo.in_dim;
    lo.u = at;
    at += 4 * h * h;
    lo.b_ih = at;
    at += 4 * h;
    lo.b_hh = at;
    at += 4 * h;
    layers.push_back(lo);
  }
  head_w1 = at;
  at += m * h;
  head_b1 = at;
  at += m;
  head_w2 = at;
  at += 3 * m;
  head_b2 = at;
  at += 3;
  total = at;
}

std::size_t parameter_count(const DecoderConfig& cfg) { return DecoderLayout(cfg).total; }

DecoderParams::DecoderParams(DecoderConfig cfg)
    : cfg_(cfg), layout_(cfg), values_(layout_.total, 0.0f) {}

std::vector<NamedBlock> DecoderParams::blocks() const {
  const std::size_t h = cfg_.hidden_size;
  const std::size_t m = cfg_.mlp_hidden;
  std::vector<NamedBlock> out;
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const auto& lo = layout_.layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    out.push_back({p + "w_ih", lo.w, {4 * h, static_cast<std::size_t>(lo.in_dim)}});
    out.push_back({p + "w_hh", lo.u, {4 * h, h}});
    out.push_back({p + "b_ih", lo.b_ih, {4 * h}});
    out.push_back({p + "b_hh", lo.b_hh, {4 * h}});
  }
  out.push_back({"head.w1", layout_.head_w1, {m, h}});
  out.push_back({"head.b1", layout_.head_b1, {m}});
  out.push_back({"head.w2", layout_.head_w2, {3, m}});
  out.push_back({"head.b2", layout_.head_b2, {3}});
  return out;
}

DecoderParams init_decoder(const DecoderConfig& cfg, std::uint64_t seed) {
  DecoderParams params(cfg);
  auto v = params.values();
  const auto& lay = params.layout();
  const std::size_t h = cfg.hidden_size;
  const std::size_t m = cfg.mlp_hidden;
  std::mt19937_64 rng(seed);
  auto fill = [&](std::size_t at, std::size_t n, double bound) {
    for (std::size_t i = 0; i < n; ++i) v[at + i] = static_cast<float>(detail::uniform(rng, -bound, bound));
  };
  const double rec_bound = 1.0 / std::sqrt(static_cast<double>(h));
  for (const auto& lo : lay.layers) {
    fill(lo.w, 4 * h * lo.in_dim, rec_bound);
    fill(lo.u, 4 * h * h, rec_bound);
    std::fill_n(v.begin() + lo.b_ih + h, h, 1.0f);
  }
  fill(lay.head_w1, m * h, 1.0 / std::sqrt(static_cast<double>(h)));
  fill(lay.head_w2, 3 * m, 1.0 / std::sqrt(static_cast<double>(m)));
  return params;
}

namespace {

using detail::sigmoid_approx;
using detail::tanh_approx;

// The three kernels below work on ray-innermost tensors. Full tiles keep a
// kRowTile x kLaneTile accumulator block in registers; ragged edges fall back
// to plain loops with the same summation order. The compiler may contract
// the two paths into FMAs differently, so a ray's result can move by an ulp
// with its position in the batch; callers that need bit-stable output keep
// batch boundaries fixed.
constexpr int kRowTile = 4;
constexpr int kLaneTile = 16;

// out[r][b] += sum_k w[r * ldw + k] * x[k][b]
void matmul_acc(float* __restrict out, const float* __restrict w, std::size_t ldw, int rows,
                int cols, const float* __restrict x, int n) {
  const int n_full = n - n % kLaneTile;
  int r0 = 0;
  for (; r0 + kRowTile <= rows; r0 += kRowTile) {
    for (int b0 = 0; b0 < n_full; b0 += kLaneTile) {
      float acc[kRowTile][kLaneTile];
      for (int rr = 0; rr < kRowTile; ++rr) {
        for (int bb = 0; bb < kLaneTile; ++bb) acc[rr][bb] = out[(r0 + rr) * static_cast<std::size_t>(n) + b0 + bb];
      }
      for (int k = 0; k < cols; ++k) {
        const float* __restrict xk = x + static_cast<std::size_t>(k) * n + b0;
        for (int rr = 0; rr < kRowTile; ++rr) {
          const float a = w[(r0 + rr) * ldw + k];
#pragma omp simd
          for (int bb = 0; bb < kLaneTile; ++bb) acc[rr][bb] += a * xk[bb];
        }
      }
      for (int rr = 0; rr < kRowTile; ++rr) {
        for (int bb = 0; bb < kLaneTile; ++bb) out[(r0 + rr) * static_cast<std::size_t>(n) + b0 + bb] = acc[rr][bb];
      }
    }
  }
  auto edge = [&](int r_begin, int r_end, int b_begin) {
    for (int r = r_begin; r < r_end; ++r) {
      float* __restrict o = out + static_cast<std::size_t>(r) * n;
      for (int b = b_begin; b < n; ++b) {
        float acc = o[b];
        for (int k = 0; k < cols; ++k) acc += w[r * ldw + k] * x[static_cast<std::size_t>(k) * n + b];
        o[b] = acc;
      }
    }
  };
  edge(0, r0, n_full);
  edge(r0, rows, 0);
}

// out[k][b] += sum_r w[r * ldw + k] * d[r][b]
void matmul_t_acc(float* __restrict out, const float* __restrict w, std::size_t ldw, int rows,
                  int cols, const float* __restrict d, int n) {
  const int n_full = n - n % kLaneTile;
  int k0 = 0;
  for (; k0 + kRowTile <= cols; k0 += kRowTile) {
    for (int b0 = 0; b0 < n_full; b0 += kLaneTile) {
      float acc[kRowTile][kLaneTile];
      for (int kk = 0; kk < kRowTile; ++kk) {
        for (int bb = 0; bb < kLaneTile; ++bb) acc[kk][bb] = out[(k0 + kk) * static_cast<std::size_t>(n) + b0 + bb];
      }
      for (int r = 0; r < rows; ++r) {
        const float* __restrict dr = d + static_cast<std::size_t>(r) * n + b0;
        for (int kk = 0; kk < kRowTile; ++kk) {
          const float a = w[r * ldw + k0 + kk];
#pragma omp simd
          for (int bb = 0; bb < kLaneTile; ++bb) acc[kk][bb] += a * dr[bb];
        }
      }
      for (int kk = 0; kk < kRowTile; ++kk) {
        for (int bb = 0; bb < kLaneTile; ++bb) out[(k0 + kk) * static_cast<std::size_t>(n) + b0 + bb] = acc[kk][bb];
      }
    }
  }
  auto edge = [&](int k_begin, int k_end, int b_begin) {
    for (int k = k_begin; k < k_end; ++k) {
      float* __restrict o = out + static_cast<std::size_t>(k) * n;
      for (int b = b_begin; b < n; ++b) {
        float acc = o[b];
        for (int r = 0; r < rows; ++r) acc += w[r * ldw + k] * d[static_cast<std::size_t>(r) * n + b];
        o[b] = acc;
      }
    }
  };
  edge(0, k0, n_full);
  edge(k0, cols, 0);
}

// g[r * ldg + k] += sum_b d[r][b] * x[k][b]
void outer_acc(float* __restrict g, std::size_t ldg, int rows, int cols, const float* __restrict d,
               const float* __restrict x, int n) {
  constexpr int kLanes = 8;
  const int n_full = n - n % kLanes;
  int r0 = 0;
  for (; r0 + kRowTile <= rows; r0 += kRowTile) {
    int k0 = 0;
    for (; k0 + kRowTile <= cols; k0 += kRowTile) {
      float acc[kRowTile][kRowTile][kLanes] = {};
      for (int b0 = 0; b0 < n_full; b0 += kLanes) {
        for (int rr = 0; rr < kRowTile; ++rr) {
          const float* __restrict dr = d + (r0 + rr) * static_cast<std::size_t>(n) + b0;
          for (int kk = 0; kk < kRowTile; ++kk) {
            const float* __restrict xk = x + (k0 + kk) * static_cast<std::size_t>(n) + b0;
#pragma omp simd
            for (int l = 0; l < kLanes; ++l) acc[rr][kk][l] += dr[l] * xk[l];
          }
        }
      }
      for (int rr = 0; rr < kRowTile; ++rr) {
        for (int kk = 0; kk < kRowTile; ++kk) {
          float s = 0.0f;
          for (int l = 0; l < kLanes; ++l) s += acc[rr][kk][l];
          for (int b = n_full; b < n; ++b) {
            s += d[(r0 + rr) * static_cast<std::size_t>(n) + b] * x[(k0 + kk) * static_cast<std::size_t>(n) + b];
          }
          g[(r0 + rr) * ldg + k0 + kk] += s;
        }
      }
    }
    for (int rr = 0; rr < kRowTile; ++rr) {
      for (int k = k0; k < cols; ++k) {
        float s = 0.0f;
        for (int b = 0; b < n; ++b) s += d[(r0 + rr) * static_cast<std::size_t>(n) + b] * x[static_cast<std::size_t>(k) * n + b];
        g[(r0 + rr) * ldg + k] += s;
      }
    }
  }
  for (int r = r0; r < rows; ++r) {
    for (int k = 0; k < cols; ++k) {
      float s = 0.0f;
      for (int b = 0; b < n; ++b) s += d[static_cast<std::size_t>(r) * n + b] * x[static_cast<std::size_t>(k) * n + b];
      g[r * ldg + k] += s;
    }
  }
}

void row_sums_acc(float* __restrict g, int rows, const float* __restrict d, int n) {
  for (int r = 0; r < rows; ++r) {
    const float* __restrict dr = d + static_cast<std::size_t>(r) * n;
    float s = 0.0f;
#pragma omp simd reduction(+ : s)
    for (int b = 0; b < n; ++b) s += dr[b];
    g[r] += s;
  }
}

void broadcast_bias(float* out, const float* b_ih, const float* b_hh, int rows, int n) {
  for (int r = 0; r < rows; ++r) {
    const float v = b_ih[r] + b_hh[r];
    std::fill_n(out + static_cast<std::size_t>(r) * n, n, v);
  }
}

}  // namespace

void lstm_cell_forward(const DecoderParams& params, int layer, std::span<const float> x,
                       std::span<const float> h_prev, std::span<const float> c_prev,
                       std::span<float> h, std::span<float> c) {
  const int hs = params.config().hidden_size;
  const auto& lo = params.layout().layers.at(layer);
  if (static_cast<int>(x.size()) != lo.in_dim || static_cast<int>(h_prev.size()) != hs ||
      static_cast<int>(c_prev.size()) != hs || static_cast<int>(h.size()) != hs ||
      static_cast<int>(c.size()) != hs) {
    throw ContractError("lstm_cell_forward dimension mismatch");
  }
  const auto v = params.values();
  std::vector<float> pre(4 * hs);
  for (int r = 0; r < 4 * hs; ++r) {
    float s = v[lo.b_ih + r] + v[lo.b_hh + r];
    for (int k = 0; k < lo.in_dim; ++k) s += v[lo.w + r * lo.in_dim + k] * x[k];
    for (int j = 0; j < hs; ++j) s += v[lo.u + r * hs + j] * h_prev[j];
    pre[r] = s;
  }
  for (int j = 0; j < hs; ++j) {
    const float ig = sigmoid_approx(pre[j]);
    const float fg = sigmoid_approx(pre[hs + j]);
    const float gg = tanh_approx(pre[2 * hs + j]);
    const float og = sigmoid_approx(pre[3 * hs + j]);
    c[j] = fg * c_prev[j] + ig * gg;
    h[j] = og * tanh_approx(c[j]);
  }
}

float* DecoderTape::state(std::vector<float>& buf, int t, int layer, int rows) {
  const int slot = slots_ == steps_ ? t : (t & 1);
  return buf.data() + (static_cast<std::size_t>(slot) * layers_ + layer) * rows * rays_;
}

void DecoderTape::forward(const DecoderParams& params, int rays, int steps,
                          std::span<const float> step_inputs, std::span<const float> ray_inputs,
                          std::span<float> rgb, bool record) {
  const auto& cfg = params.config();
  const auto& lay = params.layout();
  if (rays < 1 || steps < 1) throw InputDomainError("decoder needs at least one ray and one step");
  if (step_inputs.size() % (static_cast<std::size_t>(rays) * steps) != 0) {
    throw ContractError("decoder step input size is not a multiple of steps * rays");
  }
  const int step_dim = static_cast<int>(step_inputs.size() / (static_cast<std::size_t>(rays) * steps));
  const int ray_dim = cfg.input_dim - step_dim;
  if (ray_dim < 0 || ray_inputs.size() != static_cast<std::size_t>(ray_dim) * rays ||
      rgb.size() != 3u * rays) {
    throw ContractError("decoder input widths do not add up to input_dim");
  }
  for (float f : step_inputs) {
    if (!std::isfinite(f)) throw InputDomainError("decoder got a non-finite feature");
  }

  rays_ = rays;
  steps_ = steps;
  step_dim_ = step_dim;
  ray_dim_ = ray_dim;
  hidden_ = cfg.hidden_size;
  layers_ = cfg.num_layers;
  slots_ = record ? steps : std::min(steps, 2);
  recorded_ = false;

  const int h = hidden_;
  const int g4 = 4 * h;
  const int m = cfg.mlp_hidden;
  const int n = rays;
  const std::size_t per_slot = static_cast<std::size_t>(layers_) * n;
  step_inputs_.assign(step_inputs.begin(), step_inputs.end());
  ray_inputs_.assign(ray_inputs.begin(), ray_inputs.end());
  gates_.resize(slots_ * per_slot * g4);
  cell_.resize(slots_ * per_slot * h);
  tanh_cell_.resize(slots_ * per_slot * h);
  hidden_state_.resize(slots_ * per_slot * h);
  base_.resize(static_cast<std::size_t>(g4) * n);
  head_pre_.resize(static_cast<std::size_t>(m) * n);
  head_act_.resize(static_cast<std::size_t>(m) * n);
  rgb_.resize(3u * n);
  zeros_.assign(static_cast<std::size_t>(h) * n, 0.0f);

  const float* v = params.values().data();
  const auto& l0 = lay.layers[0];
  broadcast_bias(base_.data(), v + l0.b_ih, v + l0.b_hh, g4, n);
  if (ray_dim > 0) matmul_acc(base_.data(), v + l0.w + step_dim, l0.in_dim, g4, ray_dim, ray_inputs_.data(), n);

  const std::size_t hn = static_cast<std::size_t>(h) * n;
  for (int t = 0; t < steps; ++t) {
    for (int l = 0; l < layers_; ++l) {
      const auto& lo = lay.layers[l];
      float* pre = state(gates_, t, l, g4);
      if (l == 0) {
        std::copy(base_.begin(), base_.end(), pre);
        matmul_acc(pre, v + lo.w, lo.in_dim, g4, step_dim,
                   step_inputs_.data() + static_cast<std::size_t>(t) * step_dim * n, n);
      } else {
        broadcast_bias(pre, v + lo.b_ih, v + lo.b_hh, g4, n);
        matmul_acc(pre, v + lo.w, lo.in_dim, g4, h, state(hidden_state_, t, l - 1, h), n);
      }
      if (t > 0) matmul_acc(pre, v + lo.u, h, g4, h, state(hidden_state_, t - 1, l, h), n);

      const float* c_prev = t > 0 ? state(cell_, t - 1, l, h) : nullptr;
      float* c = state(cell_, t, l, h);
      float* tc = state(tanh_cell_, t, l, h);
      float* hs = state(hidden_state_, t, l, h);
      const float* __restrict cp = c_prev ? c_prev : zeros_.data();
#pragma omp simd
      for (std::size_t i = 0; i < hn; ++i) {
        const float ig = sigmoid_approx(pre[i]);
        const float fg = sigmoid_approx(pre[hn + i]);
        const float gg = tanh_approx(pre[2 * hn + i]);
        const float og = sigmoid_approx(pre[3 * hn + i]);
        pre[i] = ig;
        pre[hn + i] = fg;
        pre[2 * hn + i] = gg;
        pre[3 * hn + i] = og;
        const float cv = fg * cp[i] + ig * gg;
        const float tcv = tanh_approx(cv);
        c[i] = cv;
        tc[i] = tcv;
        hs[i] = og * tcv;
      }
    }
  }

  const float* top = state(hidden_state_, steps - 1, layers_ - 1, h);
  for (int r = 0; r < m; ++r) std::fill_n(head_pre_.data() + static_cast<std::size_t>(r) * n, n, v[lay.head_b1 + r]);
  matmul_acc(head_pre_.data(), v + lay.head_w1, h, m, h, top, n);
  for (std::size_t i = 0; i < head_pre_.size(); ++i) head_act_[i] = std::max(head_pre_[i], 0.0f);
  for (int r = 0; r < 3; ++r) std::fill_n(rgb_.data() + static_cast<std::size_t>(r) * n, n, v[lay.head_b2 + r]);
  matmul_acc(rgb_.data(), v + lay.head_w2, m, 3, m, head_act_.data(), n);
  for (std::size_t i = 0; i < rgb_.size(); ++i) {
    rgb_[i] = sigmoid_approx(rgb_[i]);
    rgb[i] = rgb_[i];
  }
  recorded_ = record;
}

void DecoderTape::backward(const DecoderParams& params, std::span<const float> upstream,
                           std::span<float> param_grad, std::span<float> step_grad) {
  if (!recorded_) throw ContractError("decoder backward called without a recorded forward pass");
  const auto& cfg = params.config();
  const auto& lay = params.layout();
  const int n = rays_;
  const int h = hidden_;
  const int g4 = 4 * h;
  const int m = cfg.mlp_hidden;
  if (cfg.hidden_size != h || cfg.num_layers != layers_) {
    throw ContractError("decoder backward parameters do not match the recorded forward");
  }
  if (upstream.size() != 3u * n || param_grad.size() != lay.total ||
      step_grad.size() != static_cast<std::size_t>(steps_) * step_dim_ * n) {
    throw ContractError("decoder backward buffer size mismatch");
  }
  recorded_ = false;
  const float* v = params.values().data();
  float* G = param_grad.data();
  std::fill(step_grad.begin(), step_grad.end(), 0.0f);

  const std::size_t hn = static_cast<std::size_t>(h) * n;
  std::vector<float> dz2(3u * n);
  for (std::size_t i = 0; i < dz2.size(); ++i) dz2[i] = upstream[i] * rgb_[i] * (1.0f - rgb_[i]);
  outer_acc(G + lay.head_w2, m, 3, m, dz2.data(), head_act_.data(), n);
  row_sums_acc(G + lay.head_b2, 3, dz2.data(), n);
  std::vector<float> dz1(static_cast<std::size_t>(m) * n, 0.0f);
  matmul_t_acc(dz1.data(), v + lay.head_w2, m, 3, m, dz2.data(), n);
  for (std::size_t i = 0; i < dz1.size(); ++i) {
    if (!(head_pre_[i] > 0.0f)) dz1[i] = 0.0f;
  }
  const float* top = state(hidden_state_, steps_ - 1, layers_ - 1, h);
  outer_acc(G + lay.head_w1, h, m, h, dz1.data(), top, n);
  row_sums_acc(G + lay.head_b1, m, dz1.data(), n);

  // Recurrent carries per layer.
  std::vector<float> dh_rec(layers_ * hn, 0.0f);
  std::vector<float> dc(layers_ * hn, 0.0f);
  std::vector<float> dpre_sum(static_cast<std::size_t>(layers_) * g4 * n, 0.0f);
  matmul_t_acc(dh_rec.data() + (layers_ - 1) * hn, v + lay.head_w1, h, m, h, dz1.data(), n);

  std::vector<float> dh_up(hn, 0.0f);
  std::vector<float> dh(hn);
  std::vector<float> dpre(static_cast<std::size_t>(g4) * n);

  for (int t = steps_ - 1; t >= 0; --t) {
    for (int l = layers_ - 1; l >= 0; --l) {
      const auto& lo = lay.layers[l];
      float* dhr = dh_rec.data() + l * hn;
      float* dcl = dc.data() + l * hn;
      const bool has_up = l < layers_ - 1;
      for (std::size_t i = 0; i < hn; ++i) dh[i] = dhr[i] + (has_up ? dh_up[i] : 0.0f);

      const float* gate = state(gates_, t, l, g4);
      const float* tc = state(tanh_cell_, t, l, h);
      const float* c_prev = t > 0 ? state(cell_, t - 1, l, h) : nullptr;
      for (std::size_t i = 0; i < hn; ++i) {
        const float ig = gate[i];
        const float fg = gate[hn + i];
        const float gg = gate[2 * hn + i];
        const float og = gate[3 * hn + i];
        const float dct = dcl[i] + dh[i] * og * (1.0f - tc[i] * tc[i]);
        const float cp = c_prev ? c_prev[i] : 0.0f;
        dpre[i] = dct * gg * ig * (1.0f - ig);
        dpre[hn + i] = dct * cp * fg * (1.0f - fg);
        dpre[2 * hn + i] = dct * ig * (1.0f - gg * gg);
        dpre[3 * hn + i] = dh[i] * tc[i] * og * (1.0f - og);
        dcl[i] = dct * fg;
      }
      float* acc = dpre_sum.data() + static_cast<std::size_t>(l) * g4 * n;
      for (std::size_t i = 0; i < dpre.size(); ++i) acc[i] += dpre[i];

      if (l == 0) {
        const float* x = step_inputs_.data() + static_cast<std::size_t>(t) * step_dim_ * n;
        outer_acc(G + lo.w, lo.in_dim, g4, step_dim_, dpre.data(), x, n);
        matmul_t_acc(step_grad.data() + static_cast<std::size_t>(t) * step_dim_ * n, v + lo.w,
                     lo.in_dim, g4, step_dim_, dpre.data(), n);
      } else {
        outer_acc(G + lo.w, h, g4, h, dpre.data(), state(hidden_state_, t, l - 1, h), n);
        std::fill(dh_up.begin(), dh_up.end(), 0.0f);
        matmul_t_acc(dh_up.data(), v + lo.w, h, g4, h, dpre.data(), n);
      }
      std::fill(dhr, dhr + hn, 0.0f);
      if (t > 0) {
        outer_acc(G + lo.u, h, g4, h, dpre.data(), state(hidden_state_, t - 1, l, h), n);
        matmul_t_acc(dhr, v + lo.u, h, g4, h, dpre.data(), n);
      }
    }
  }

  for (int l = 0; l < layers_; ++l) {
    const auto& lo = lay.layers[l];
    const float* acc = dpre_sum.data() + static_cast<std::size_t>(l) * g4 * n;
    row_sums_acc(G + lo.b_ih, g4, acc, n);
    row_sums_acc(G + lo.b_hh, g4, acc, n);
  }
  if (ray_dim_ > 0) {
    const auto& l0 = lay.layers[0];
    outer_acc(G + l0.w + step_dim_, l0.in_dim, g4, ray_dim_, dpre_sum.data(), ray_inputs_.data(), n);
  }
}

Rgb decode_ray(const DecoderParams& params, std::span<const float> features, int steps,
               std::span<const float> ray_input) {
  DecoderTape tape;
  Rgb rgb{};
  tape.forward(params, 1, steps, features, ray_input, rgb, false);
  return rgb;
}

RayGradients decode_ray_backward(const DecoderParams& params, DecoderTape& tape,
                                 const Rgb& upstream) {
  if (!tape.recorded()) throw ContractError("decode_ray_backward needs a recorded forward pass");
  if (tape.rays() != 1) throw ContractError("decode_ray_backward expects a single-ray tape");
  RayGradients out;
  out.params.assign(params.values().size(), 0.0f);
  out.features.assign(static_cast<std::size_t>(tape.steps()) * tape.step_dim(), 0.0f);
  tape.backward(params, upstream, out.params, out.features);
  return out;
}

}  // namespace gnelf::decoder
