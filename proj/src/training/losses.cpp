// SPDX-License-Identifier: Apache-2.0
#include "tsed/training/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tsed::training {

void AflConfig::validate() const {
  if (!(gamma >= 0.0) || !(zeta >= 0.0)) throw std::invalid_argument("afl: gamma and zeta must be non-negative");
}

Var bce_loss(const Var& p, const Tensor& y) { return ops::bce_loss(p, y); }

Var afl_loss(const Var& p, const Tensor& y, const AflConfig& cfg) {
  cfg.validate();
  return ops::asymmetric_focal_loss(p, y, cfg.gamma, cfg.zeta);
}

Var consistency_loss(const models::ModelOutput& student, const models::ModelOutput& teacher) {
  Var frame = ops::mse_loss(student.frame, teacher.frame.value());
  Var clip = ops::mse_loss(student.clip, teacher.clip.value());
  return ops::scale(ops::add(frame, clip), 0.5);
}

Var ict_term(const Var& x1, const Var& x2, double lambda, models::Model& student, models::Model& teacher,
             Rng& student_rng, Rng& teacher_rng, models::Pooling pooling) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("ict: lambda must lie in [0, 1]");
  if (x1.shape() != x2.shape()) throw std::invalid_argument("ict: inputs differ in shape");
  models::ModelOutput target;
  {
    NoGradGuard guard;
    models::ModelOutput t1 = teacher.forward(x1, true, teacher_rng, pooling);
    models::ModelOutput t2 = teacher.forward(x2, true, teacher_rng, pooling);
    target.frame = Var(ops::add(ops::scale(t1.frame, lambda), ops::scale(t2.frame, 1.0 - lambda)).value());
    target.clip = Var(ops::add(ops::scale(t1.clip, lambda), ops::scale(t2.clip, 1.0 - lambda)).value());
  }
  Var mixed = ops::add(ops::scale(x1, lambda), ops::scale(x2, 1.0 - lambda));
  return consistency_loss(student.forward(mixed, true, student_rng, pooling), target);
}

double warmup_coefficient(double epoch, std::size_t warmup_epochs) {
  if (epoch < 0.0) throw std::invalid_argument("warmup: epoch must be non-negative");
  if (warmup_epochs == 0) return 1.0;
  const double r = 1.0 - std::min(epoch / static_cast<double>(warmup_epochs), 1.0);
  return std::exp(-5.0 * r * r);
}

}  // namespace tsed::training
