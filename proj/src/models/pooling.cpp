// SPDX-License-Identifier: Apache-2.0
#include "tsed/models/pooling.hpp"

#include <stdexcept>

#include "tsed/numerics/ops.hpp"

namespace tsed::models {

Var attention_pool(const Var& logits, const Var& probs) {
  if (logits.shape() != probs.shape()) {
    throw std::invalid_argument("attention_pool: logits " + shape_str(logits.shape()) + " vs probs " +
                                shape_str(probs.shape()));
  }
  const std::size_t rank = probs.shape().size();
  if (rank != 2 && rank != 3) throw std::invalid_argument("attention_pool: expected [T,K] or [N,T,K]");
  const std::size_t time_axis = rank - 2;
  if (probs.shape()[time_axis] == 0) throw std::invalid_argument("attention_pool: empty time axis");
  Var w = ops::softmax(logits, time_axis);
  return ops::sum_axis(ops::mul(w, probs), time_axis);
}

Var exp_softmax_pool(const Var& probs) { return attention_pool(probs, probs); }

}  // namespace tsed::models
