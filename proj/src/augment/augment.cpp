// SPDX-License-Identifier: Apache-2.0
#include "tsed/augment/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace tsed::augment {

namespace {

void require_matrix(const Tensor& x, const char* what) {
  if (x.rank() != 2) throw std::invalid_argument(std::string(what) + ": expected [T, M], got " + shape_str(x.shape()));
}

}  // namespace

AugmentConfig AugmentConfig::stage1() {
  AugmentConfig c;
  c.noise = true;
  c.filter_aug = false;
  return c;
}

AugmentConfig AugmentConfig::stage2() {
  AugmentConfig c;
  c.noise = false;
  c.filter_aug = true;
  return c;
}

void AugmentConfig::validate() const {
  if (frame_shift_max < 0) throw std::invalid_argument("frame_shift_max must be non-negative");
  if (noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be non-negative");
  if (mixup && !(mixup_alpha > 0.0)) throw std::invalid_argument("mixup_alpha must be positive when mixup is enabled");
  if (filter_aug_bands.first < 1 || filter_aug_bands.first > filter_aug_bands.second) {
    throw std::invalid_argument("filter_aug_bands must satisfy 1 <= min <= max");
  }
  if (filter_aug_db.first > filter_aug_db.second) throw std::invalid_argument("filter_aug_db min exceeds max");
  if (apply_prob < 0.0 || apply_prob > 1.0) throw std::invalid_argument("apply_prob must lie in [0, 1]");
}

Tensor mask_frames(const Tensor& x, std::size_t start, std::size_t width) {
  require_matrix(x, "time_mask");
  const std::size_t t = x.dim(0), m = x.dim(1);
  if (start + width > t) throw std::invalid_argument("time_mask: span exceeds frame count");
  Tensor y = x;
  std::fill(y.storage().begin() + static_cast<std::ptrdiff_t>(start * m),
            y.storage().begin() + static_cast<std::ptrdiff_t>((start + width) * m), 0.0);
  return y;
}

Tensor time_mask(const Tensor& x, Rng& rng, const AugmentConfig& cfg, MaskDraw* draw) {
  require_matrix(x, "time_mask");
  const std::size_t t = x.dim(0);
  const std::size_t max_w = std::min(cfg.time_mask_max_frames, t);
  MaskDraw d;
  d.width = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(max_w)));
  d.start = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(t - d.width)));
  if (draw) *draw = d;
  return mask_frames(x, d.start, d.width);
}

Tensor shift_rows(const Tensor& x, long shift) {
  if (x.rank() < 1) throw std::invalid_argument("shift_rows: scalar input");
  const long t = static_cast<long>(x.dim(0));
  const std::size_t row = t > 0 ? x.size() / static_cast<std::size_t>(t) : 0;
  Tensor y(x.shape(), 0.0);
  for (long i = 0; i < t; ++i) {
    long j = i + shift;
    if (j < 0 || j >= t) continue;
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(i) * row), row,
                y.storage().begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(j) * row));
  }
  return y;
}

long frame_shift(Tensor& features, Tensor& targets, std::size_t ratio, Rng& rng, const AugmentConfig& cfg) {
  require_matrix(features, "frame_shift");
  if (ratio == 0) throw std::invalid_argument("frame_shift: ratio must be positive");
  const long limit = cfg.frame_shift_max / static_cast<long>(ratio);
  const long s = uniform_int(rng, -limit, limit);
  const long feature_shift = s * static_cast<long>(ratio);
  features = shift_rows(features, feature_shift);
  if (!targets.empty()) targets = shift_rows(targets, s);
  return feature_shift;
}

Tensor mix(const Tensor& a, const Tensor& b, double lambda) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("mixup: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = lambda * a[i] + (1.0 - lambda) * b[i];
  return y;
}

double draw_mixup_lambda(Rng& rng, const AugmentConfig& cfg) {
  if (!(cfg.mixup_alpha > 0.0)) throw std::invalid_argument("mixup_alpha must be positive");
  return beta(rng, cfg.mixup_alpha, cfg.mixup_alpha);
}

double mixup(Tensor& features_a, Tensor& labels_a, const Tensor& features_b, const Tensor& labels_b, Rng& rng,
             const AugmentConfig& cfg) {
  if (features_a.shape() != features_b.shape() || labels_a.shape() != labels_b.shape()) {
    throw std::invalid_argument("mixup: shape mismatch between the two samples");
  }
  const double lambda = draw_mixup_lambda(rng, cfg);
  features_a = mix(features_a, features_b, lambda);
  labels_a = mix(labels_a, labels_b, lambda);
  return lambda;
}

Tensor add_gaussian_noise(const Tensor& x, Rng& rng, const AugmentConfig& cfg) {
  if (cfg.noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be non-negative");
  Tensor y = x;
  if (cfg.noise_sigma == 0.0) return y;
  std::normal_distribution<double> n(0.0, cfg.noise_sigma);
  for (auto& v : y.storage()) v += n(rng);
  return y;
}

Tensor apply_band_gains(const Tensor& x, const FilterDraw& bands) {
  require_matrix(x, "filter_augment");
  const std::size_t t = x.dim(0), m = x.dim(1);
  if (bands.gains_db.size() != bands.boundaries.size() + 1) {
    throw std::invalid_argument("filter_augment: need one gain per band");
  }
  std::vector<double> column_gain(m);
  std::size_t band = 0;
  for (std::size_t f = 0; f < m; ++f) {
    while (band < bands.boundaries.size() && f >= bands.boundaries[band]) ++band;
    column_gain[f] = bands.gains_db[band] * std::numbers::ln10 / 20.0;
  }
  Tensor y = x;
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t f = 0; f < m; ++f) y[i * m + f] += column_gain[f];
  return y;
}

Tensor filter_augment(const Tensor& x, Rng& rng, const AugmentConfig& cfg, FilterDraw* draw) {
  require_matrix(x, "filter_augment");
  const std::size_t m = x.dim(1);
  auto [lo, hi] = cfg.filter_aug_bands;
  hi = std::min(hi, m);
  lo = std::min(lo, hi);
  const auto n_bands = static_cast<std::size_t>(uniform_int(rng, static_cast<long>(lo), static_cast<long>(hi)));
  // n_bands - 1 distinct cut points from 1 .. m-1
  std::vector<std::size_t> cuts(m - 1);
  std::iota(cuts.begin(), cuts.end(), 1);
  std::shuffle(cuts.begin(), cuts.end(), rng);
  FilterDraw d;
  d.boundaries.assign(cuts.begin(), cuts.begin() + static_cast<std::ptrdiff_t>(n_bands - 1));
  std::sort(d.boundaries.begin(), d.boundaries.end());
  for (std::size_t b = 0; b < n_bands; ++b) {
    d.gains_db.push_back(cfg.filter_aug_db.first == cfg.filter_aug_db.second
                             ? cfg.filter_aug_db.first
                             : uniform(rng, cfg.filter_aug_db.first, cfg.filter_aug_db.second));
  }
  if (draw) *draw = d;
  return apply_band_gains(x, d);
}

}  // namespace tsed::augment
