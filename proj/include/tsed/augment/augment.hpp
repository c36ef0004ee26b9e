// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "tsed/numerics/random.hpp"
#include "tsed/numerics/tensor.hpp"

/// Feature-domain augmentations. Features are [T, M] (time x mel) and frame
/// targets are [T', K]. Every random transform has a deterministic
/// counterpart taking the drawn parameters, and optionally reports its draw.
namespace tsed::augment {

struct AugmentConfig {
  bool time_mask = true;
  bool frame_shift = true;
  bool mixup = true;
  bool noise = false;
  bool filter_aug = false;

  std::size_t time_mask_max_frames = 62;
  long frame_shift_max = 16;  // feature frames, either direction
  double mixup_alpha = 0.2;
  double noise_sigma = 0.05;
  std::pair<std::size_t, std::size_t> filter_aug_bands{2, 5};
  std::pair<double, double> filter_aug_db{-6.0, 6.0};

  /// Chance that each enabled transform is applied to a given batch.
  double apply_prob = 0.5;

  /// {time-mask, frame-shift, mixup, gaussian noise}.
  static AugmentConfig stage1();
  /// {time-mask, frame-shift, mixup, filter augmentation}.
  static AugmentConfig stage2();

  /// Throws std::invalid_argument on negative ranges or a non-positive
  /// mixup alpha while mixup is enabled.
  void validate() const;
};

struct MaskDraw {
  std::size_t start = 0;
  std::size_t width = 0;
};

Tensor mask_frames(const Tensor& x, std::size_t start, std::size_t width);
Tensor time_mask(const Tensor& x, Rng& rng, const AugmentConfig& cfg, MaskDraw* draw = nullptr);

/// Moves row i to row i + shift; vacated rows become zero.
Tensor shift_rows(const Tensor& x, long shift);

/// Shifts features by `ratio * s` rows and targets by `s` rows, where s is
/// drawn so that |ratio * s| <= frame_shift_max. `targets` may be empty
/// (clip-level labels are shift-invariant). Returns the feature shift.
long frame_shift(Tensor& features, Tensor& targets, std::size_t ratio, Rng& rng, const AugmentConfig& cfg);

/// lambda * a + (1 - lambda) * b.
Tensor mix(const Tensor& a, const Tensor& b, double lambda);
double draw_mixup_lambda(Rng& rng, const AugmentConfig& cfg);

/// Mixes two (features, labels) pairs with one lambda ~ Beta(alpha, alpha).
/// Returns the lambda used.
double mixup(Tensor& features_a, Tensor& labels_a, const Tensor& features_b, const Tensor& labels_b, Rng& rng,
             const AugmentConfig& cfg);

Tensor add_gaussian_noise(const Tensor& x, Rng& rng, const AugmentConfig& cfg);

struct FilterDraw {
  std::vector<std::size_t> boundaries;  // band starts after the first, strictly increasing
  std::vector<double> gains_db;         // one per band
};

/// Adds gain_db * ln(10) / 20 to every mel column of each band.
Tensor apply_band_gains(const Tensor& x, const FilterDraw& bands);
Tensor filter_augment(const Tensor& x, Rng& rng, const AugmentConfig& cfg, FilterDraw* draw = nullptr);

}  // namespace tsed::augment
