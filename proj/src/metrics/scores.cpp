// SPDX-License-Identifier: Apache-2.0
#include "tsed/metrics/scores.hpp"

#include <stdexcept>

namespace tsed::metrics {

double Confusion::f1() const {
  const double d = 2.0 * tp + fp + fn;
  return d == 0.0 ? 1.0 : 2.0 * tp / d;
}

std::vector<Confusion> confusion_by_class(const Tensor& probs, const Tensor& targets, double threshold) {
  if (probs.shape() != targets.shape() || probs.rank() == 0) {
    throw std::invalid_argument("f1: probs " + shape_str(probs.shape()) + " vs targets " + shape_str(targets.shape()));
  }
  const std::size_t k = probs.shape().back();
  std::vector<Confusion> out(k);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool pred = probs[i] >= threshold, truth = targets[i] >= 0.5;
    Confusion& c = out[i % k];
    if (pred && truth) c.tp += 1.0;
    else if (pred) c.fp += 1.0;
    else if (truth) c.fn += 1.0;
  }
  return out;
}

double macro_f1(const Tensor& probs, const Tensor& targets, double threshold) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : confusion_by_class(probs, targets, threshold)) {
    if (c.tp + c.fp + c.fn == 0.0) continue;
    sum += c.f1();
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 1.0;
}

double micro_f1(const Tensor& probs, const Tensor& targets, double threshold) {
  Confusion total;
  for (const auto& c : confusion_by_class(probs, targets, threshold)) {
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
  }
  return total.f1();
}

}  // namespace tsed::metrics
