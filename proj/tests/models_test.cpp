// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "support/gradcheck.hpp"
#include "tsed/models/model.hpp"
#include "tsed/models/pooling.hpp"
#include "tsed/numerics/checkpoint.hpp"

namespace tsed::models {
namespace {

using testing::grad_check;
using testing::random_tensor;

constexpr double kGradTol = 1e-4;

Var leaf(Tensor t) { return Var(std::move(t), true); }

CrnnConfig mini_crnn(std::size_t basis = 0) {
  CrnnConfig c;
  c.n_mels = 4;
  c.n_classes = 2;
  c.filters = {3, 4};
  c.pools = {{2, 2}, {2, 2}};
  c.gru_hidden = 3;
  c.gru_layers = 2;
  c.dropout = 0.0;
  c.basis_kernels = basis;
  c.temperature = 2.0;
  c.init_seed = 5;
  return c;
}

AtConfig mini_at() {
  AtConfig c;
  c.n_classes = 2;
  c.channels = {2, 2, 2, 2, 2, 3};
  c.embedding = 3;
  c.gru_hidden = 2;
  c.dropout = 0.0;
  c.init_seed = 3;
  return c;
}

Var supervised_loss(Model& m, const Var& x, const Tensor& frame_y, const Tensor& clip_y) {
  Rng rng(0);
  ModelOutput out = m.forward(x, true, rng);
  return ops::add(ops::bce_loss(out.frame, frame_y), ops::bce_loss(out.clip, clip_y));
}

Tensor binary(Shape s, Rng& rng) {
  Tensor t(std::move(s));
  for (auto& v : t.storage()) v = bernoulli(rng, 0.5) ? 1.0 : 0.0;
  return t;
}

// ---- pooling heads ----

TEST(ExpSoftmaxPool, ZeroOneFrames) {
  Var y(Tensor({2, 1}, {0.0, 1.0}));
  EXPECT_NEAR(exp_softmax_pool(y).value()[0], std::exp(1.0) / (1.0 + std::exp(1.0)), 1e-12);
}

TEST(ExpSoftmaxPool, ConstantFramesAndEmptyAxis) {
  Var y(Tensor({5, 3}, 0.37));
  Tensor pooled = exp_softmax_pool(y).value();
  for (double v : pooled.data()) EXPECT_NEAR(v, 0.37, 1e-15);
  EXPECT_THROW(exp_softmax_pool(Var(Tensor({0, 3}))), std::invalid_argument);
}

TEST(ExpSoftmaxPool, BetweenMeanAndMaxAndOrderFree) {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const auto t = static_cast<std::size_t>(uniform_int(rng, 1, 40));
    Tensor y = random_tensor({t, 1}, rng, 0.0, 1.0);
    const double pooled = exp_softmax_pool(Var(y)).value()[0];
    const double mean = std::accumulate(y.data().begin(), y.data().end(), 0.0) / static_cast<double>(t);
    const double lo = *std::min_element(y.data().begin(), y.data().end());
    const double hi = *std::max_element(y.data().begin(), y.data().end());
    ASSERT_GE(pooled, mean - 1e-12);
    ASSERT_GE(pooled, lo - 1e-12);
    ASSERT_LE(pooled, hi + 1e-12);
    Tensor shuffled = y;
    std::shuffle(shuffled.storage().begin(), shuffled.storage().end(), rng);
    ASSERT_NEAR(exp_softmax_pool(Var(shuffled)).value()[0], pooled, 1e-12);
  }
}

TEST(AttentionPool, ConvexCombination) {
  Rng rng(2);
  Var logits(random_tensor({3, 7, 4}, rng, -3, 3));
  Var constant(Tensor({3, 7, 4}, 0.25));
  Tensor pooled = attention_pool(logits, constant).value();
  for (double v : pooled.data()) EXPECT_NEAR(v, 0.25, 1e-15);
  Var one(random_tensor({1, 4}, rng, 0, 1));
  Var one_logit(random_tensor({1, 4}, rng, -2, 2));
  EXPECT_EQ(attention_pool(one_logit, one).value().storage(), one.value().storage());
  // weights sum to one: pooling an all-ones signal gives exactly one
  Tensor total = attention_pool(logits, Var(Tensor({3, 7, 4}, 1.0))).value();
  for (double v : total.data()) EXPECT_NEAR(v, 1.0, 1e-14);
  EXPECT_THROW(attention_pool(Var(Tensor({3, 4})), Var(Tensor({4, 3}))), std::invalid_argument);
}

TEST(PoolingGradients, MatchFiniteDifferences) {
  Rng rng(4);
  Var logits = leaf(random_tensor({2, 5, 3}, rng, -2, 2));
  Var probs = leaf(random_tensor({2, 5, 3}, rng, 0.05, 0.95));
  Tensor w = random_tensor({2, 3}, rng);
  auto probe = [&](const Var& v) { return ops::sum(ops::mul(v, Var(w))); };
  EXPECT_LT(grad_check([&] { return probe(attention_pool(logits, probs)); }, {logits, probs}).max_rel_error, kGradTol);
  EXPECT_LT(grad_check([&] { return probe(exp_softmax_pool(probs)); }, {probs}).max_rel_error, kGradTol);
}

// ---- CRNN ----

std::size_t analytic_crnn_count(std::size_t k) {
  // conv + bn per block
  const std::size_t f[] = {16, 32, 64, 128, 128, 128, 128};
  std::size_t n = 0, cin = 1;
  for (std::size_t o : f) {
    n += o * cin * 3 * 3 + o + 2 * o;
    cin = o;
  }
  // GRU: 3 gates, input and recurrent weights and two biases, both directions
  n += 2 * (3 * 128 * (128 + 128) + 2 * 3 * 128);
  n += 2 * (3 * 128 * (256 + 128) + 2 * 3 * 128);
  n += 2 * (256 * k + k);
  return n;
}

TEST(Crnn, ParameterCountMatchesClosedForm) {
  CrnnConfig cfg;
  Crnn m(cfg);
  EXPECT_EQ(m.store().param_count(), analytic_crnn_count(10));
  EXPECT_EQ(crnn_param_count(cfg), analytic_crnn_count(10));
  cfg.n_classes = 3;
  EXPECT_EQ(Crnn(cfg).store().param_count(), analytic_crnn_count(3));
}

TEST(Crnn, FullSizeOutputShape) {
  CrnnConfig cfg;
  cfg.n_classes = 3;
  Crnn m(cfg);
  Rng rng(1);
  Tensor x = random_tensor({626, 128}, rng, -2, 2);
  Posteriors p = m.infer(x);
  EXPECT_EQ(p.frame.shape(), (Shape{156, 3}));
  EXPECT_EQ(p.clip.shape(), (Shape{3}));
  for (double v : p.frame.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
  for (double v : p.clip.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
  EXPECT_EQ(m.output_frames(626), 156u);
}

TEST(Crnn, ZeroWeightsGiveHalfProbabilities) {
  Crnn m(mini_crnn());
  for (auto& p : m.store().params()) p.mutable_value().fill(0.0);
  Rng rng(1);
  Posteriors out = m.infer(random_tensor({8, 4}, rng));
  for (double v : out.frame.data()) EXPECT_DOUBLE_EQ(v, 0.5);
  for (double v : out.clip.data()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Crnn, RejectsWrongMelCount) {
  Crnn m(mini_crnn());
  Rng rng(1);
  EXPECT_THROW(m.forward(Var(Tensor({1, 8, 5})), false, rng), std::invalid_argument);
  CrnnConfig bad = mini_crnn();
  bad.n_mels = 8;
  EXPECT_THROW(Crnn{bad}, std::invalid_argument);
}

TEST(Crnn, GradientCheckOnTwoFrameMiniature) {
  Crnn m(mini_crnn());
  Rng rng(9);
  Var x(random_tensor({2, 8, 4}, rng, -2, 2));
  Tensor fy = binary({2, 2, 2}, rng), cy = binary({2, 2}, rng);
  auto r = grad_check([&] { return supervised_loss(m, x, fy, cy); }, m.store().params());
  EXPECT_LT(r.max_rel_error, kGradTol);
  EXPECT_EQ(r.checked, m.store().param_count());
}

// ---- FDY ----

TEST(Fdy, ParameterCountNearTwoPointEightMillion) {
  CrnnConfig cfg = CrnnConfig::fdy(4);
  std::size_t n = crnn_param_count(cfg);
  EXPECT_EQ(Crnn(cfg).store().param_count(), n);
  EXPECT_GE(static_cast<double>(n), 0.8 * 2.8e6);
  EXPECT_LE(static_cast<double>(n), 1.2 * 2.8e6);
}

TEST(Fdy, SameOutputShapeAsCrnn) {
  CrnnConfig plain = mini_crnn(), fdy = mini_crnn(4);
  Crnn a(plain), b(fdy);
  Rng rng(3);
  Tensor x = random_tensor({16, 4}, rng);
  EXPECT_EQ(a.infer(x).frame.shape(), b.infer(x).frame.shape());
}

TEST(Fdy, SingleBasisCollapsesToCrnn) {
  CrnnConfig plain = CrnnConfig{}, fdy = CrnnConfig::fdy(1);
  plain.n_classes = fdy.n_classes = 4;
  Crnn crnn(plain), fdy_model(fdy);
  // copy every CRNN tensor into the FDY model by name
  auto state = fdy_model.store().state();
  for (const auto& e : crnn.store().state())
    for (auto& f : state)
      if (f.name == e.name) f.value = e.value;
  fdy_model.store().load_state(state);
  Rng rng(17);
  Tensor x = random_tensor({626, 128}, rng, -2, 2);
  Posteriors a = crnn.infer(x), b = fdy_model.infer(x);
  ASSERT_EQ(a.frame.shape(), b.frame.shape());
  for (std::size_t i = 0; i < a.frame.size(); ++i) ASSERT_NEAR(a.frame[i], b.frame[i], 1e-6);
  for (std::size_t i = 0; i < a.clip.size(); ++i) ASSERT_NEAR(a.clip[i], b.clip[i], 1e-6);
}

TEST(Fdy, UniformAttentionEqualsMeanKernel) {
  Rng rng(8);
  const std::size_t kb = 4, o = 3, c = 2;
  Var x(random_tensor({2, c, 6, 5}, rng));
  Var w(random_tensor({kb * o, c, 3, 3}, rng));
  Var b(random_tensor({kb * o}, rng));
  Tensor uniform_w({2, 6, kb}, 1.0 / kb);
  Var mixed = ops::frequency_mix(ops::conv2d(x, w, b, {{1, 1}, {1, 1}}), Var(uniform_w));
  Tensor mean_w({o, c, 3, 3}, 0.0), mean_b({o}, 0.0);
  for (std::size_t k = 0; k < kb; ++k) {
    for (std::size_t i = 0; i < mean_w.size(); ++i) mean_w[i] += w.value()[k * mean_w.size() + i] / kb;
    for (std::size_t i = 0; i < o; ++i) mean_b[i] += b.value()[k * o + i] / kb;
  }
  Var direct = ops::conv2d(x, Var(mean_w), Var(mean_b), {{1, 1}, {1, 1}});
  for (std::size_t i = 0; i < direct.value().size(); ++i) ASSERT_NEAR(mixed.value()[i], direct.value()[i], 1e-12);
}

TEST(Fdy, ForcedUniformAttentionMatchesMeanKernelModel) {
  CrnnConfig fcfg = mini_crnn(3), pcfg = mini_crnn();
  Crnn fdy(fcfg), plain(pcfg);
  auto pstate = plain.store().state();
  auto fstate = fdy.store().state();
  for (auto& p : pstate) {
    const NamedTensor* f = nullptr;
    for (const auto& e : fstate)
      if (e.name == p.name) f = &e;
    ASSERT_NE(f, nullptr) << p.name;
    if (f->value.shape() == p.value.shape()) {
      p.value = f->value;
      continue;
    }
    // conv kernels and biases: average the three bases
    const std::size_t chunk = p.value.size();
    p.value.fill(0.0);
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t i = 0; i < chunk; ++i) p.value[i] += f->value[k * chunk + i] / 3.0;
  }
  plain.store().load_state(pstate);
  fdy.force_basis_weights(Var(Tensor({3}, 1.0 / 3.0)));
  Rng rng(5);
  Tensor x = random_tensor({16, 4}, rng);
  Posteriors a = fdy.infer(x), b = plain.infer(x);
  for (std::size_t i = 0; i < a.frame.size(); ++i) ASSERT_NEAR(a.frame[i], b.frame[i], 1e-10);
}

TEST(Fdy, AttentionIsOnTheSimplex) {
  CrnnConfig cfg = mini_crnn(4);
  cfg.temperature = 0.5;  // sharpen so the check is not trivially uniform
  Crnn m(cfg);
  Rng rng(6);
  Var x(random_tensor({3, 3, 2, 7}, rng, -4, 4));  // input to block 1
  Tensor w = m.basis_weights(1, x).value();
  ASSERT_EQ(w.shape(), (Shape{3, 2, 4}));
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      ASSERT_GE(w[i * 4 + k], 0.0);
      s += w[i * 4 + k];
    }
    ASSERT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Fdy, GradientCheckOnTwoBlockMiniature) {
  Crnn m(mini_crnn(3));
  Rng rng(10);
  Var x(random_tensor({2, 8, 4}, rng, -2, 2));
  Tensor fy = binary({2, 2, 2}, rng), cy = binary({2, 2}, rng);
  auto r = grad_check([&] { return supervised_loss(m, x, fy, cy); }, m.store().params());
  EXPECT_LT(r.max_rel_error, kGradTol);
}

// ---- AT backbone ----

TEST(At, TimeDownsampleIsSixtyFour) {
  AtConfig cfg = AtConfig::scaled(16);
  cfg.n_classes = 3;
  AtBackbone m(cfg);
  Rng rng(1);
  Posteriors p = m.infer(random_tensor({626, 64}, rng));
  EXPECT_EQ(p.frame.shape(), (Shape{9, 3}));
  EXPECT_EQ(m.output_frames(626), 9u);
}

TEST(At, FullWidthParameterCountNear118M) {
  std::size_t n = at_param_count(AtConfig{});
  EXPECT_GE(static_cast<double>(n), 0.9 * 118e6);
  EXPECT_LE(static_cast<double>(n), 1.1 * 118e6);
}

TEST(At, ClosedFormCountMatchesBuiltModel) {
  for (std::size_t div : {8u, 16u, 32u}) {
    AtConfig cfg = AtConfig::scaled(div);
    EXPECT_EQ(AtBackbone(cfg).store().param_count(), at_param_count(cfg)) << div;
  }
}

TEST(At, DeskWidthForwardUnderOneSecond) {
  AtBackbone m(AtConfig::scaled(8));
  Rng rng(1);
  Tensor x = random_tensor({626, 64}, rng);
  m.infer(x);  // warm caches
  auto t0 = std::chrono::steady_clock::now();
  m.infer(x);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(secs, 1.0);
}

TEST(At, GradientCheckOnMiniature) {
  AtBackbone m(mini_at());
  Rng rng(12);
  Var x(random_tensor({2, 64, 64}, rng, -2, 2));
  Tensor fy = binary({2, 1, 2}, rng), cy = binary({2, 2}, rng);
  auto r = grad_check([&] { return supervised_loss(m, x, fy, cy); }, m.store().params());
  EXPECT_LT(r.max_rel_error, kGradTol);
}

TEST(At, ExpSoftmaxPoolingAtInference) {
  AtBackbone m(mini_at());
  Rng rng(1);
  Tensor x = random_tensor({128, 64}, rng);
  Posteriors p = m.infer(x, Pooling::ExpSoftmax);
  Var pooled = exp_softmax_pool(Var(p.frame));
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(p.clip[k], pooled.value()[k], 1e-14);
}

// ---- persistence ----

std::filesystem::path tmp(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / "tsed_models_test";
  std::filesystem::create_directories(d);
  return d / name;
}

TEST(Persistence, SaveLoadReproducesOutputs) {
  Crnn m(mini_crnn(2));
  Rng rng(3);
  Tensor x = random_tensor({8, 4}, rng);
  // move batch-norm statistics and the scaler away from their defaults
  {
    Rng r2(1);
    m.forward(Var(random_tensor({2, 8, 4}, rng)), true, r2);
    m.scaler().mean = random_tensor({4}, rng);
  }
  save_model(tmp("m.ckpt"), m, {{"classes", "A,B"}});
  auto loaded = load_model(tmp("m.ckpt"));
  EXPECT_EQ(checkpoint::load_sidecar(tmp("m.ckpt")).at("classes"), "A,B");
  Posteriors a = m.infer(x), b = loaded->infer(x);
  for (std::size_t i = 0; i < a.frame.size(); ++i) EXPECT_NEAR(a.frame[i], b.frame[i], 1e-5);
}

TEST(Persistence, ArchitectureRoundTrip) {
  CrnnConfig c = CrnnConfig::fdy(4);
  EXPECT_EQ(to_arch(crnn_config_from(to_arch(c))), to_arch(c));
  AtConfig a = AtConfig::scaled(8);
  EXPECT_EQ(to_arch(at_config_from(to_arch(a))), to_arch(a));
  EXPECT_THROW(make_model({{"model", "transformer"}}), std::runtime_error);
}

TEST(Persistence, MismatchedSidecarIsRejected) {
  Crnn m(mini_crnn());
  save_model(tmp("x.ckpt"), m);
  auto arch = m.arch();
  arch["gru_hidden"] = "5";
  checkpoint::save_sidecar(tmp("x.ckpt"), arch);
  EXPECT_THROW(load_model(tmp("x.ckpt")), std::runtime_error);
}

TEST(Persistence, ImportCopiesMatchingEntries) {
  Crnn src(mini_crnn()), dst(mini_crnn(1));
  save_model(tmp("src.ckpt"), src);
  std::size_t copied = import_weights(dst, tmp("src.ckpt"));
  EXPECT_EQ(copied, src.store().state().size());
  // checkpoints hold single precision
  const Tensor a = dst.store().state()[0].value, b = src.store().state()[0].value;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-7);
}

}  // namespace
}  // namespace tsed::models
