// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>

#include "init.hpp"
#include "tsed/models/model.hpp"
#include "tsed/models/pooling.hpp"

namespace tsed::models {

using detail::uniform_tensor;

CrnnConfig CrnnConfig::fdy(std::size_t basis_kernels) {
  CrnnConfig c;
  c.basis_kernels = basis_kernels;
  return c;
}

std::size_t CrnnConfig::time_ratio() const {
  std::size_t r = 1;
  for (const auto& p : pools) r *= p.second;
  return r;
}

void CrnnConfig::validate() const {
  if (filters.empty() || filters.size() != pools.size()) {
    throw std::invalid_argument("crnn: need one pool per conv block (" + std::to_string(filters.size()) +
                                " filters, " + std::to_string(pools.size()) + " pools)");
  }
  std::size_t freq = 1;
  for (const auto& p : pools) {
    if (p.first == 0 || p.second == 0) throw std::invalid_argument("crnn: zero pooling window");
    freq *= p.first;
  }
  if (freq != n_mels) {
    throw std::invalid_argument("crnn: frequency pooling product " + std::to_string(freq) + " must equal n_mels " +
                                std::to_string(n_mels));
  }
  if (n_classes == 0 || gru_hidden == 0 || gru_layers == 0) throw std::invalid_argument("crnn: zero-sized layer");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("crnn: dropout must lie in [0, 1)");
  if (is_fdy() && !(temperature > 0.0)) throw std::invalid_argument("crnn: attention temperature must be positive");
  if (attention_reduction == 0) throw std::invalid_argument("crnn: attention_reduction must be positive");
}

namespace {

std::size_t attention_hidden(std::size_t cin, std::size_t reduction) { return std::max<std::size_t>(cin / reduction, 4); }

}  // namespace

std::size_t crnn_param_count(const CrnnConfig& cfg) {
  cfg.validate();
  std::size_t n = 0, cin = 1;
  const std::size_t kb = std::max<std::size_t>(cfg.basis_kernels, 1);
  for (std::size_t o : cfg.filters) {
    n += kb * (cin * 9 * o + o) + 2 * o;
    if (cfg.is_fdy()) {
      std::size_t h = attention_hidden(cin, cfg.attention_reduction);
      n += cin * h + h + h * kb + kb;
    }
    cin = o;
  }
  for (std::size_t l = 0; l < cfg.gru_layers; ++l) n += 2 * detail::gru_params(l == 0 ? cin : 2 * cfg.gru_hidden, cfg.gru_hidden);
  n += 2 * (2 * cfg.gru_hidden * cfg.n_classes + cfg.n_classes);
  return n;
}

Crnn::Crnn(CrnnConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(cfg_.init_seed);
  const std::size_t kb = std::max<std::size_t>(cfg_.basis_kernels, 1);
  std::size_t cin = 1;
  for (std::size_t i = 0; i < cfg_.filters.size(); ++i) {
    const std::size_t o = cfg_.filters[i];
    const std::string p = "cnn." + std::to_string(i);
    auto blk = std::make_unique<Block>();
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin * 9));
    blk->w = store_.add_param(p + ".conv.weight", uniform_tensor({kb * o, cin, 3, 3}, bound, rng));
    blk->b = store_.add_param(p + ".conv.bias", uniform_tensor({kb * o}, bound, rng));
    if (cfg_.is_fdy()) {
      const std::size_t h = attention_hidden(cin, cfg_.attention_reduction);
      const double b1 = 1.0 / std::sqrt(static_cast<double>(cin)), b2 = 1.0 / std::sqrt(static_cast<double>(h));
      blk->att_w1 = store_.add_param(p + ".att.fc1.weight", uniform_tensor({h, cin}, b1, rng));
      blk->att_b1 = store_.add_param(p + ".att.fc1.bias", uniform_tensor({h}, b1, rng));
      blk->att_w2 = store_.add_param(p + ".att.fc2.weight", uniform_tensor({kb, h}, b2, rng));
      blk->att_b2 = store_.add_param(p + ".att.fc2.bias", uniform_tensor({kb}, b2, rng));
    }
    blk->gamma = store_.add_param(p + ".bn.weight", Tensor({o}, 1.0));
    blk->beta = store_.add_param(p + ".bn.bias", Tensor({o}, 0.0));
    blk->stats.running_mean = Tensor({o}, 0.0);
    blk->stats.running_var = Tensor({o}, 1.0);
    store_.add_buffer(p + ".bn.running_mean", &blk->stats.running_mean);
    store_.add_buffer(p + ".bn.running_var", &blk->stats.running_var);
    blocks_.push_back(std::move(blk));
    cin = o;
  }
  std::size_t in = cin;
  for (std::size_t l = 0; l < cfg_.gru_layers; ++l) {
    const std::string p = "rnn." + std::to_string(l);
    auto f = detail::make_gru(store_, p + ".fwd", in, cfg_.gru_hidden, rng);
    auto b = detail::make_gru(store_, p + ".bwd", in, cfg_.gru_hidden, rng);
    gru_.emplace_back(f, b);
    in = 2 * cfg_.gru_hidden;
  }
  const double hb = 1.0 / std::sqrt(static_cast<double>(in));
  frame_w_ = store_.add_param("head.frame.weight", uniform_tensor({cfg_.n_classes, in}, hb, rng));
  frame_b_ = store_.add_param("head.frame.bias", uniform_tensor({cfg_.n_classes}, hb, rng));
  att_w_ = store_.add_param("head.att.weight", uniform_tensor({cfg_.n_classes, in}, hb, rng));
  att_b_ = store_.add_param("head.att.bias", uniform_tensor({cfg_.n_classes}, hb, rng));
  register_scaler();
}

Var Crnn::basis_weights(std::size_t i, const Var& x) const {
  const Block& blk = *blocks_.at(i);
  if (!cfg_.is_fdy()) throw std::logic_error("basis_weights: plain convolution has no basis attention");
  Var d = ops::permute(ops::mean_axis(x, 3), {0, 2, 1});  // [N, F, C]
  Var h = ops::relu(ops::linear(d, blk.att_w1, blk.att_b1));
  Var logits = ops::scale(ops::linear(h, blk.att_w2, blk.att_b2), 1.0 / cfg_.temperature);
  return ops::softmax(logits, 2);
}

Var Crnn::conv_block(std::size_t i, const Var& x, bool training) {
  Block& blk = *blocks_[i];
  ops::Conv2dOptions same{{1, 1}, {1, 1}};
  Var y = ops::conv2d(x, blk.w, blk.b, same);
  if (cfg_.is_fdy()) {
    Var w = forced_weights_.defined() ? forced_weights_ : basis_weights(i, x);
    if (forced_weights_.defined()) {
      // broadcast [F, K] to this block's batch and frequency size
      const std::size_t n = x.shape()[0], f = x.shape()[2], k = std::max<std::size_t>(cfg_.basis_kernels, 1);
      Tensor t({n, f, k});
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < f; ++b)
          for (std::size_t c = 0; c < k; ++c) t[(a * f + b) * k + c] = forced_weights_.value()[c];
      w = Var(t);
    }
    y = ops::frequency_mix(y, w);
  }
  y = ops::batch_norm(y, blk.gamma, blk.beta, blk.stats, training);
  y = ops::leaky_relu(y, cfg_.leaky_slope);
  return ops::avg_pool2d(y, cfg_.pools[i]);
}

ModelOutput Crnn::forward(const Var& x, bool training, Rng& rng, Pooling pooling) {
  const Shape& xs = x.shape();
  if (xs.size() != 3 || xs[2] != cfg_.n_mels) {
    throw std::invalid_argument("crnn: expected input [N, T, " + std::to_string(cfg_.n_mels) + "], got " +
                                shape_str(xs));
  }
  const std::size_t n = xs[0];
  Var h = ops::reshape(ops::permute(x, {0, 2, 1}), {n, 1, xs[2], xs[1]});
  for (std::size_t i = 0; i < blocks_.size(); ++i) h = conv_block(i, h, training);
  const Shape& hs = h.shape();  // [N, C, 1, T']
  h = ops::permute(ops::reshape(h, {n, hs[1], hs[3]}), {0, 2, 1});
  for (const auto& [f, b] : gru_) h = ops::bigru(h, f, b);
  h = ops::dropout(h, cfg_.dropout, rng, training);
  Var frame = ops::sigmoid(ops::linear(h, frame_w_, frame_b_));
  Var clip = pooling == Pooling::ExpSoftmax ? exp_softmax_pool(frame)
                                             : attention_pool(ops::linear(h, att_w_, att_b_), frame);
  return {frame, clip};
}

Arch Crnn::arch() const { return to_arch(cfg_); }

}  // namespace tsed::models
