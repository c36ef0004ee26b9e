// SPDX-License-Identifier: Apache-2.0
#include "tsed/numerics/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace tsed {

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
               double lr_scale) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->shape(), 0.0);
      state.v.emplace_back(p->shape(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state does not match parameters");
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const double lr = state.lr * lr_scale;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    if (g.empty()) {
      // zero gradient still decays the moments
      for (std::size_t k = 0; k < p.size(); ++k) {
        state.m[i][k] *= state.beta1;
        state.v[i][k] *= state.beta2;
        p[k] -= lr * (state.m[i][k] / c1) / (std::sqrt(state.v[i][k] / c2) + state.eps);
      }
      continue;
    }
    if (g.shape() != p.shape()) throw std::invalid_argument("adam_step: gradient shape mismatch");
    for (std::size_t k = 0; k < p.size(); ++k) {
      double& m = state.m[i][k];
      double& v = state.v[i][k];
      m = state.beta1 * m + (1.0 - state.beta1) * g[k];
      v = state.beta2 * v + (1.0 - state.beta2) * g[k] * g[k];
      p[k] -= lr * (m / c1) / (std::sqrt(v / c2) + state.eps);
    }
  }
}

void adam_step(std::vector<Var>& params, AdamState& state, double lr_scale) {
  std::vector<Tensor*> p;
  std::vector<const Tensor*> g;
  for (auto& v : params) {
    p.push_back(&v.mutable_value());
    g.push_back(&v.grad());
  }
  adam_step(p, g, state, lr_scale);
}

void ema_update(std::vector<Var>& teacher, const std::vector<Var>& student, double decay) {
  if (decay < 0.0 || decay > 1.0) throw std::invalid_argument("ema_update: decay must lie in [0, 1]");
  if (teacher.size() != student.size()) throw std::invalid_argument("ema_update: parameter count mismatch");
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    Tensor& t = teacher[i].mutable_value();
    const Tensor& s = student[i].value();
    if (t.shape() != s.shape()) throw std::invalid_argument("ema_update: shape mismatch");
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = decay * t[k] + (1.0 - decay) * s[k];
  }
}

}  // namespace tsed
