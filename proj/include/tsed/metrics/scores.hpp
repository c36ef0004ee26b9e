// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "tsed/numerics/tensor.hpp"

namespace tsed::metrics {

/// Binary counts of thresholded scores against {0,1} targets.
struct Confusion {
  double tp = 0.0, fp = 0.0, fn = 0.0;
  double f1() const;  // 2tp / (2tp + fp + fn); 1 when there is nothing to find or flag
};

/// Per-class confusion of probs [..., K] against targets of the same shape.
std::vector<Confusion> confusion_by_class(const Tensor& probs, const Tensor& targets, double threshold = 0.5);

/// Mean per-class F1 over classes with at least one positive target or
/// prediction. Returns 1 when no class qualifies.
double macro_f1(const Tensor& probs, const Tensor& targets, double threshold = 0.5);

/// F1 of all cells pooled together.
double micro_f1(const Tensor& probs, const Tensor& targets, double threshold = 0.5);

}  // namespace tsed::metrics
