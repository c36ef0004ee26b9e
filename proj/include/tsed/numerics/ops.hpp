// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "tsed/numerics/autograd.hpp"
#include "tsed/numerics/random.hpp"

/// Differentiable operators. Every function records its own backward rule.
namespace tsed::ops {

// Elementwise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);

// Reductions and layout.
Var sum(const Var& x);
Var mean(const Var& x);
Var sum_axis(const Var& x, std::size_t axis);
Var mean_axis(const Var& x, std::size_t axis);
Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<std::size_t>& order);
Var concat(const std::vector<Var>& parts, std::size_t axis);
/// Selects entries along axis 0.
Var take(const Var& x, std::span<const std::size_t> indices);

/// x [..., in] times w [out, in] plus b [out]. `b` may be undefined.
Var linear(const Var& x, const Var& w, const Var& b);
Var softmax(const Var& x, std::size_t axis);

struct Conv2dOptions {
  std::pair<std::size_t, std::size_t> stride{1, 1};
  std::pair<std::size_t, std::size_t> padding{0, 0};
};

/// Input [N, C_in, F, T] (or [C_in, F, T]); kernels [C_out, C_in, kH, kW];
/// optional bias [C_out].
Var conv2d(const Var& x, const Var& w, const Var& b, const Conv2dOptions& opt = {});

/// Averages non-overlapping (freq, time) windows over the last two axes.
/// Trailing rows/columns that do not fill a window are dropped.
Var avg_pool2d(const Var& x, std::pair<std::size_t, std::size_t> window);

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
};

struct BatchNormOptions {
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Normalizes over every axis except axis 1. Training mode uses batch
/// statistics and updates `stats`; eval mode uses `stats`.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats, bool training,
               const BatchNormOptions& opt = {});

Var dropout(const Var& x, double p, Rng& rng, bool training);

struct GruWeights {
  Var w_ih;  // [3H, D], gate order (reset, update, candidate)
  Var w_hh;  // [3H, H]
  Var b_ih;  // [3H]
  Var b_hh;  // [3H]
};

/// Single-direction GRU over x [N, T, D]; returns hidden states [N, T, H]
/// aligned with the input time axis.
Var gru(const Var& x, const GruWeights& w, bool reverse);

/// Forward and backward GRU passes over x [T, D] or [N, T, D], concatenated
/// on the feature axis: [.., T, 2H].
Var bigru(const Var& x, const GruWeights& forward, const GruWeights& backward);

/// y [N, K*O, F, T] holds K basis responses (basis-major channel blocks);
/// weights [N, F, K]. Returns [N, O, F, T] with
/// out(n,o,f,t) = sum_k weights(n,f,k) * y(n, k*O+o, f, t).
Var frequency_mix(const Var& y, const Var& weights);

// Losses against constant targets; all mean-reduced to a scalar.
Var bce_loss(const Var& p, const Tensor& target);
Var asymmetric_focal_loss(const Var& p, const Tensor& target, double gamma, double zeta);
Var mse_loss(const Var& x, const Tensor& target);

constexpr double kProbClamp = 1e-7;

}  // namespace tsed::ops
