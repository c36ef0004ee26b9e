// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace tsed {

/// All stochastic components draw from an explicit engine so that runs are
/// replayable from a seed.
using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

/// Inclusive on both ends.
inline long uniform_int(Rng& rng, long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(rng); }

inline double normal(Rng& rng, double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

/// Beta(a, b) via the ratio of two gamma draws.
inline double beta(Rng& rng, double a, double b) {
  double x = std::gamma_distribution<double>(a, 1.0)(rng);
  double y = std::gamma_distribution<double>(b, 1.0)(rng);
  if (x + y == 0.0) return 0.5;
  return x / (x + y);
}

/// Independent engine per (seed, purpose) pair, so that consuming one
/// stream never shifts the draws of another.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(purpose >> 32)};
  return Rng(seq);
}

inline bool bernoulli(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

}  // namespace tsed
