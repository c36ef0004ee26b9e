// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>

#include "tsed/numerics/ops.hpp"
#include "tsed/numerics/parameters.hpp"
#include "tsed/numerics/random.hpp"

namespace tsed::models::detail {

inline Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = uniform(rng, -bound, bound);
  return t;
}

inline ops::GruWeights make_gru(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                                Rng& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
  ops::GruWeights g;
  g.w_ih = store.add_param(prefix + ".w_ih", uniform_tensor({3 * hidden, in}, k, rng));
  g.w_hh = store.add_param(prefix + ".w_hh", uniform_tensor({3 * hidden, hidden}, k, rng));
  g.b_ih = store.add_param(prefix + ".b_ih", uniform_tensor({3 * hidden}, k, rng));
  g.b_hh = store.add_param(prefix + ".b_hh", uniform_tensor({3 * hidden}, k, rng));
  return g;
}

inline std::size_t gru_params(std::size_t in, std::size_t hidden) {
  return 3 * hidden * in + 3 * hidden * hidden + 6 * hidden;
}

}  // namespace tsed::models::detail
