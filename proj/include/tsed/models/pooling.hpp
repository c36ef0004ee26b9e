// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tsed/numerics/autograd.hpp"

namespace tsed::models {

/// clip(n, c) = sum_t softmax_t(logits(n, t, c)) * probs(n, t, c).
/// Both inputs are [N, T, K] (or [T, K]); the result is [N, K] (or [K]).
Var attention_pool(const Var& logits, const Var& probs);

/// clip = sum_t y_t exp(y_t) / sum_t exp(y_t), per class; same layouts as
/// `attention_pool`. Throws on an empty time axis.
Var exp_softmax_pool(const Var& probs);

}  // namespace tsed::models
