// SPDX-License-Identifier: Apache-2.0
#include "gnelf/optim.hpp"

#include <algorithm>
#include <cmath>

#include "gnelf/error.hpp"

namespace gnelf::optim {

void AdamHyper::validate() const {
  if (!(lr > 0.0f)) throw ConfigError("adam learning rate must be positive");
  if (!(beta1 > 0.0f && beta1 < 1.0f) || !(beta2 > 0.0f && beta2 < 1.0f)) {
    throw ConfigError("adam betas must lie in (0, 1)");
  }
  if (!(eps > 0.0f)) throw ConfigError("adam eps must be positive");
}

ParamGroup::ParamGroup(std::string name_, std::span<float> values_, AdamHyper hyper_)
    : name(std::move(name_)),
      values(values_),
      grads(values_.size(), 0.0f),
      m(values_.size(), 0.0f),
      v(values_.size(), 0.0f),
      hyper(hyper_) {
  hyper.validate();
}

void ParamGroup::zero_grad() { std::fill(grads.begin(), grads.end(), 0.0f); }

MseResult mse_loss(std::span<const float> pred, std::span<const float> target) {
  if (pred.size() != target.size()) throw InputDomainError("mse_loss shape mismatch");
  if (pred.empty()) throw InputDomainError("mse_loss on an empty batch");
  MseResult out;
  out.grad.resize(pred.size());
  const double count = static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - target[i];
    sum += d * d;
    out.grad[i] = static_cast<float>(2.0 * d / count);
  }
  out.loss = sum / count;
  return out;
}

void adam_step(ParamGroup& group) {
  for (std::size_t i = 0; i < group.grads.size(); ++i) {
    if (!std::isfinite(group.grads[i])) {
      throw DivergenceError("non-finite gradient in group '" + group.name + "' at index " +
                            std::to_string(i) + " (step " + std::to_string(group.hyper.t + 1) + ")");
    }
  }
  auto& hp = group.hyper;
  hp.t += 1;
  const double bc1 = 1.0 - std::pow(static_cast<double>(hp.beta1), static_cast<double>(hp.t));
  const double bc2 = 1.0 - std::pow(static_cast<double>(hp.beta2), static_cast<double>(hp.t));
  const float inv_bc1 = static_cast<float>(1.0 / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  const float b1 = hp.beta1, b2 = hp.beta2, lr = hp.lr, eps = hp.eps;
  float* x = group.values.data();
  float* g = group.grads.data();
  float* m = group.m.data();
  float* v = group.v.data();
  const std::size_t n = group.grads.size();
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0f - b1) * g[i];
    v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
    const float mhat = m[i] * inv_bc1;
    const float vhat = v[i] * inv_bc2;
    x[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    g[i] = 0.0f;
  }
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const std::function<double()>& loss, std::span<float> params,
                           std::span<const float> analytic, std::span<const std::size_t> coords,
                           double h) {
  if (analytic.size() != params.size()) throw ContractError("grad_check size mismatch");
  GradCheckResult out;
  for (std::size_t idx : coords) {
    const float saved = params[idx];
    const float plus = static_cast<float>(saved + h);
    const float minus = static_cast<float>(saved - h);
    params[idx] = plus;
    const double f_plus = loss();
    params[idx] = minus;
    const double f_minus = loss();
    params[idx] = saved;
    // Divide by the perturbation actually representable in f32.
    const double numeric = (f_plus - f_minus) / (static_cast<double>(plus) - minus);
    GradCheckEntry e{idx, analytic[idx], numeric, relative_error(analytic[idx], numeric)};
    if (out.entries.empty() || e.rel_error > out.max_rel_error) {
      out.max_rel_error = e.rel_error;
      out.worst_index = idx;
    }
    out.entries.push_back(e);
  }
  return out;
}

}  // namespace gnelf::optim
