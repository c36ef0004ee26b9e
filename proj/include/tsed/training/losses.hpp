// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tsed/models/model.hpp"

namespace tsed::training {

/// Asymmetric focal loss exponents: gamma weights active targets, zeta
/// inactive ones. Both zero is plain binary cross-entropy.
struct AflConfig {
  double gamma = 0.0;
  double zeta = 0.0;
  void validate() const;
};

/// -mean[y ln p + (1 - y) ln(1 - p)] with p clamped to [1e-7, 1 - 1e-7].
Var bce_loss(const Var& p, const Tensor& y);

/// -mean[(1 - p)^gamma y ln p + p^zeta (1 - y) ln(1 - p)].
Var afl_loss(const Var& p, const Tensor& y, const AflConfig& cfg);

/// Mean of the frame-level and clip-level squared errors between student
/// and teacher probabilities. The teacher side is a constant.
Var consistency_loss(const models::ModelOutput& student, const models::ModelOutput& teacher);

/// Interpolation consistency: the student on lambda x1 + (1 - lambda) x2 is
/// pulled toward lambda teacher(x1) + (1 - lambda) teacher(x2). The teacher
/// runs in training mode without recording a graph.
Var ict_term(const Var& x1, const Var& x2, double lambda, models::Model& student, models::Model& teacher,
             Rng& student_rng, Rng& teacher_rng, models::Pooling pooling = models::Pooling::Attention);

/// exp(-5 (1 - min(epoch / warmup_epochs, 1))^2); 1 when warmup_epochs is 0.
/// `epoch` may be fractional.
double warmup_coefficient(double epoch, std::size_t warmup_epochs);

}  // namespace tsed::training
