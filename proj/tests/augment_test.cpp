// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "tsed/augment/augment.hpp"

namespace tsed::augment {
namespace {

Tensor features(std::size_t t, std::size_t m, std::uint64_t seed = 1) {
  Rng rng(seed);
  Tensor x({t, m});
  for (auto& v : x.storage()) v = uniform(rng, -3.0, 3.0);
  return x;
}

AugmentConfig quiet() {
  AugmentConfig c;
  c.time_mask_max_frames = 0;
  c.frame_shift_max = 0;
  c.noise_sigma = 0.0;
  c.filter_aug_db = {0.0, 0.0};
  return c;
}

TEST(TimeMask, DisabledIsIdentity) {
  Tensor x = features(40, 8);
  Rng rng(2);
  EXPECT_EQ(time_mask(x, rng, quiet()).storage(), x.storage());
}

TEST(TimeMask, FullWidthZeroesEverything) {
  Tensor y = mask_frames(features(30, 4), 0, 30);
  for (double v : y.data()) ASSERT_EQ(v, 0.0);
}

TEST(TimeMask, SeededDrawReplays) {
  Tensor x = features(626, 16);
  AugmentConfig cfg;
  cfg.time_mask_max_frames = 62;
  // Search for a seed whose draw masks frames 10..19, then replay it.
  std::uint64_t seed = 0;
  MaskDraw d;
  for (;; ++seed) {
    Rng probe(seed);
    time_mask(x, probe, cfg, &d);
    if (d.start == 10 && d.width == 10) break;
    ASSERT_LT(seed, 2000000u);
  }
  Rng rng(seed);
  Tensor y = time_mask(x, rng, cfg);
  for (std::size_t i = 0; i < 626; ++i)
    for (std::size_t f = 0; f < 16; ++f) {
      if (i >= 10 && i <= 19) {
        ASSERT_EQ(y[i * 16 + f], 0.0);
      } else {
        ASSERT_EQ(y[i * 16 + f], x[i * 16 + f]);
      }
    }
}

TEST(TimeMask, WidthNeverExceedsMaximum) {
  Tensor x = Tensor({100, 2}, 1.0);
  AugmentConfig cfg;
  cfg.time_mask_max_frames = 7;
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    Tensor y = time_mask(x, rng, cfg);
    double zeros = 0;
    for (double v : y.data()) zeros += (v == 0.0);
    ASSERT_LE(zeros, 14.0);
  }
}

TEST(FrameShift, ZeroShiftIsIdentity) {
  Tensor x = features(20, 3), t = features(20, 2, 9);
  Tensor x0 = x, t0 = t;
  Rng rng(1);
  EXPECT_EQ(frame_shift(x, t, 1, rng, quiet()), 0);
  EXPECT_EQ(x.storage(), x0.storage());
  EXPECT_EQ(t.storage(), t0.storage());
}

TEST(FrameShift, RowsMoveTogether) {
  Tensor x = features(20, 3), t = features(20, 2, 9);
  Tensor xs = shift_rows(x, 5), ts = shift_rows(t, 5);
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t f = 0; f < 3; ++f) ASSERT_EQ(xs[i * 3 + f], i < 5 ? 0.0 : x[(i - 5) * 3 + f]);
    for (std::size_t k = 0; k < 2; ++k) ASSERT_EQ(ts[i * 2 + k], i < 5 ? 0.0 : t[(i - 5) * 2 + k]);
  }
  Tensor back = shift_rows(x, -3);
  for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(back[16 * 3 + f], x[19 * 3 + f]);
  for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(back[19 * 3 + f], 0.0);
}

TEST(FrameShift, PooledTargetsFollowFeatures) {
  AugmentConfig cfg;
  cfg.frame_shift_max = 16;
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x({64, 2}), t({16, 1});
    for (std::size_t i = 0; i < 64; ++i) x[i * 2] = static_cast<double>(i + 1);
    for (std::size_t i = 0; i < 16; ++i) t[i] = static_cast<double>(i + 1);
    long s = frame_shift(x, t, 4, rng, cfg);
    ASSERT_EQ(s % 4, 0);
    ASSERT_LE(std::abs(s), 16);
    Tensor xe({64, 2}), te({16, 1});
    for (std::size_t i = 0; i < 64; ++i) xe[i * 2] = static_cast<double>(i + 1);
    for (std::size_t i = 0; i < 16; ++i) te[i] = static_cast<double>(i + 1);
    ASSERT_EQ(x.storage(), shift_rows(xe, s).storage());
    ASSERT_EQ(t.storage(), shift_rows(te, s / 4).storage());
  }
}

TEST(FrameShift, ClipLabelsUntouched) {
  Tensor x = features(50, 3);
  Tensor weak;  // clip-level labels are not passed
  AugmentConfig cfg;
  Rng rng(3);
  frame_shift(x, weak, 1, rng, cfg);
  EXPECT_TRUE(weak.empty());
}

TEST(Mixup, LambdaOneReturnsFirst) {
  Tensor a = features(10, 4, 1), b = features(10, 4, 2);
  EXPECT_EQ(mix(a, b, 1.0).storage(), a.storage());
}

TEST(Mixup, HalfMixOfTwoLabels) {
  Tensor dog({2}, {1.0, 0.0}), cat({2}, {0.0, 1.0});
  Tensor y = mix(dog, cat, 0.5);
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Mixup, ConvexAndMassPreserving) {
  Rng rng(12);
  AugmentConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    Tensor fa = features(5, 3, static_cast<std::uint64_t>(trial)), fb = features(5, 3, 1000u + trial);
    Tensor la({5, 2}), lb({5, 2});
    for (auto& v : la.storage()) v = bernoulli(rng, 0.5) ? 1.0 : uniform(rng, 0.0, 1.0);
    for (auto& v : lb.storage()) v = bernoulli(rng, 0.5) ? 0.0 : uniform(rng, 0.0, 1.0);
    const double sa = std::accumulate(la.data().begin(), la.data().end(), 0.0);
    const double sb = std::accumulate(lb.data().begin(), lb.data().end(), 0.0);
    Tensor lout = la;
    double lambda = mixup(fa, lout, fb, lb, rng, cfg);
    ASSERT_GE(lambda, 0.0);
    ASSERT_LE(lambda, 1.0);
    for (double v : lout.data()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
    ASSERT_NEAR(std::accumulate(lout.data().begin(), lout.data().end(), 0.0), lambda * sa + (1 - lambda) * sb,
                1e-12);
  }
}

TEST(Mixup, ShapeMismatchThrows) {
  EXPECT_THROW(mix(Tensor({2, 2}), Tensor({2, 3}), 0.5), std::invalid_argument);
  Tensor a({2, 2}), la({2});
  Rng rng(1);
  EXPECT_THROW(mixup(a, la, Tensor({2, 2}), Tensor({3}), rng, AugmentConfig{}), std::invalid_argument);
}

TEST(GaussianNoise, ZeroSigmaIsIdentity) {
  Tensor x = features(10, 5);
  Rng rng(1);
  EXPECT_EQ(add_gaussian_noise(x, rng, quiet()).storage(), x.storage());
}

TEST(GaussianNoise, UnitSigmaHasNearZeroMean) {
  Tensor x = features(626, 128);
  AugmentConfig cfg;
  cfg.noise_sigma = 1.0;
  Rng rng(2024);
  Tensor y = add_gaussian_noise(x, rng, cfg);
  double mean = 0.0, var = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) mean += y[i] - x[i];
  mean /= static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) var += std::pow(y[i] - x[i] - mean, 2);
  var /= static_cast<double>(x.size());
  EXPECT_LT(std::abs(mean), 0.05);
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(FilterAugment, ZeroGainIsIdentity) {
  Tensor x = features(20, 64);
  Rng rng(5);
  EXPECT_EQ(filter_augment(x, rng, quiet()).storage(), x.storage());
}

TEST(FilterAugment, SingleBandTwentyDb) {
  Tensor x = features(20, 64);
  AugmentConfig cfg;
  cfg.filter_aug_bands = {1, 1};
  cfg.filter_aug_db = {20.0, 20.0};
  Rng rng(5);
  Tensor y = filter_augment(x, rng, cfg);
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(y[i] - x[i], 2.302585092994046, 1e-12);
}

TEST(FilterAugment, TwoBandsSplitAtBoundary) {
  Tensor x = features(10, 128);
  Tensor y = apply_band_gains(x, FilterDraw{{64}, {6.0, -6.0}});
  const double g = 6.0 * std::log(10.0) / 20.0;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t f = 0; f < 128; ++f) ASSERT_NEAR(y[i * 128 + f] - x[i * 128 + f], f < 64 ? g : -g, 1e-12);
}

TEST(FilterAugment, SeededDrawReplays) {
  Tensor x = features(10, 128);
  AugmentConfig cfg;
  cfg.filter_aug_bands = {2, 2};
  FilterDraw d;
  Rng a(77), b(77);
  Tensor y = filter_augment(x, a, cfg, &d);
  ASSERT_EQ(d.boundaries.size(), 1u);
  ASSERT_EQ(d.gains_db.size(), 2u);
  EXPECT_EQ(y.storage(), apply_band_gains(x, d).storage());
  EXPECT_EQ(y.storage(), filter_augment(x, b, cfg).storage());
}

TEST(FilterAugment, BandCountsAndGainsWithinRange) {
  AugmentConfig cfg;
  Tensor x({4, 64});
  Rng rng(6);
  for (int trial = 0; trial < 300; ++trial) {
    FilterDraw d;
    filter_augment(x, rng, cfg, &d);
    ASSERT_GE(d.gains_db.size(), 2u);
    ASSERT_LE(d.gains_db.size(), 5u);
    for (std::size_t i = 1; i < d.boundaries.size(); ++i) ASSERT_LT(d.boundaries[i - 1], d.boundaries[i]);
    for (double g : d.gains_db) {
      ASSERT_GE(g, -6.0);
      ASSERT_LE(g, 6.0);
    }
  }
}

TEST(Transforms, ShapesPreservedAndSeedDeterministic) {
  Tensor x = features(626, 64);
  AugmentConfig cfg;
  cfg.noise_sigma = 0.3;
  auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    Tensor y = time_mask(x, rng, cfg);
    Tensor t({156, 3}, 1.0);
    frame_shift(y, t, 4, rng, cfg);
    y = add_gaussian_noise(y, rng, cfg);
    y = filter_augment(y, rng, cfg);
    Tensor l({156, 3}, 0.0);
    mixup(y, t, x, l, rng, cfg);
    EXPECT_EQ(y.shape(), x.shape());
    EXPECT_EQ(t.shape(), (Shape{156, 3}));
    return y.storage();
  };
  EXPECT_EQ(run(9), run(9));
  EXPECT_NE(run(9), run(10));
}

TEST(Config, StageMenus) {
  auto s1 = AugmentConfig::stage1();
  EXPECT_TRUE(s1.time_mask && s1.frame_shift && s1.mixup && s1.noise);
  EXPECT_FALSE(s1.filter_aug);
  auto s2 = AugmentConfig::stage2();
  EXPECT_TRUE(s2.time_mask && s2.frame_shift && s2.mixup && s2.filter_aug);
  EXPECT_FALSE(s2.noise);
  AugmentConfig bad;
  bad.mixup_alpha = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = AugmentConfig{};
  bad.noise_sigma = -1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_NO_THROW(AugmentConfig{}.validate());
}

}  // namespace
}  // namespace tsed::augment
