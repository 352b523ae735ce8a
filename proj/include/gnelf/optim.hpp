// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gnelf::optim {

struct AdamHyper {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  std::uint64_t t = 0;

  void validate() const;
};

/// A named block of trainable scalars with its gradient accumulator and Adam
/// moments. `values` views storage owned by the model.
struct ParamGroup {
  std::string name;
  std::span<float> values;
  std::vector<float> grads;
  std::vector<float> m;
  std::vector<float> v;
  AdamHyper hyper;

  ParamGroup(std::string name, std::span<float> values, AdamHyper hyper);
  void zero_grad();
};

struct MseResult {
  double loss = 0.0;
  std::vector<float> grad;  // d loss / d pred
};

/// Mean of squared differences over every scalar.
MseResult mse_loss(std::span<const float> pred, std::span<const float> target);

/// Bias-corrected Adam update, then grads are zeroed and t advances.
/// A non-finite gradient aborts the step (values and moments untouched) with
/// a DivergenceError naming the group and index.
void adam_step(ParamGroup& group);

double relative_error(double analytic, double numeric);

struct GradCheckEntry {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<GradCheckEntry> entries;
};

/// Central differences of `loss` over params[coords], compared with
/// analytic[coords]. Each coordinate is restored after probing.
GradCheckResult grad_check(const std::function<double()>& loss, std::span<float> params,
                           std::span<const float> analytic, std::span<const std::size_t> coords,
                           double h);

}  // namespace gnelf::optim
