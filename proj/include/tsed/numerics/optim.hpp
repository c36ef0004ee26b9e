// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "tsed/numerics/autograd.hpp"

namespace tsed {

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update. `grads[i]` may be empty, meaning zero.
/// The effective step size is `state.lr * lr_scale`.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
               double lr_scale = 1.0);

/// Adam over autograd leaves, reading their accumulated gradients.
void adam_step(std::vector<Var>& params, AdamState& state, double lr_scale = 1.0);

/// teacher <- decay * teacher + (1 - decay) * student, elementwise.
void ema_update(std::vector<Var>& teacher, const std::vector<Var>& student, double decay);

}  // namespace tsed
