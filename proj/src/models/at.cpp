// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>

#include "init.hpp"
#include "tsed/models/model.hpp"
#include "tsed/models/pooling.hpp"

namespace tsed::models {

using detail::uniform_tensor;

AtConfig AtConfig::scaled(std::size_t divisor) {
  if (divisor == 0) throw std::invalid_argument("at: width divisor must be positive");
  AtConfig c;
  for (auto& ch : c.channels) ch = std::max<std::size_t>(ch / divisor, 1);
  c.embedding = std::max<std::size_t>(c.embedding / divisor, 1);
  c.gru_hidden = std::max<std::size_t>(c.gru_hidden / divisor, 1);
  return c;
}

void AtConfig::validate() const {
  if (channels.size() != 6) throw std::invalid_argument("at: the backbone has exactly 6 conv blocks");
  std::size_t f = n_mels;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] == 0) throw std::invalid_argument("at: zero channels");
    f /= 2;
  }
  if (f == 0) throw std::invalid_argument("at: n_mels " + std::to_string(n_mels) + " too small for 6 poolings");
  if (n_classes == 0 || embedding == 0 || gru_hidden == 0 || gru_layers == 0) {
    throw std::invalid_argument("at: zero-sized layer");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("at: dropout must lie in [0, 1)");
}

std::size_t at_param_count(const AtConfig& cfg) {
  cfg.validate();
  std::size_t n = 0, cin = 1;
  for (std::size_t c : cfg.channels) {
    n += cin * 9 * c + c * 9 * c + 4 * c;
    cin = c;
  }
  n += cin * cfg.embedding + cfg.embedding;
  for (std::size_t l = 0; l < cfg.gru_layers; ++l) {
    n += 2 * detail::gru_params(l == 0 ? cfg.embedding : 2 * cfg.gru_hidden, cfg.gru_hidden);
  }
  n += 2 * (2 * cfg.gru_hidden * cfg.n_classes + cfg.n_classes);
  return n;
}

AtBackbone::AtBackbone(AtConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(cfg_.init_seed);
  std::size_t cin = 1;
  for (std::size_t b = 0; b < cfg_.channels.size(); ++b) {
    const std::size_t o = cfg_.channels[b];
    for (std::size_t j = 0; j < 2; ++j) {
      const std::string p = "cnn." + std::to_string(b) + "." + std::to_string(j);
      auto c = std::make_unique<Conv>();
      const double bound = 1.0 / std::sqrt(static_cast<double>(cin * 9));
      c->w = store_.add_param(p + ".conv.weight", uniform_tensor({o, cin, 3, 3}, bound, rng));
      c->gamma = store_.add_param(p + ".bn.weight", Tensor({o}, 1.0));
      c->beta = store_.add_param(p + ".bn.bias", Tensor({o}, 0.0));
      c->stats.running_mean = Tensor({o}, 0.0);
      c->stats.running_var = Tensor({o}, 1.0);
      store_.add_buffer(p + ".bn.running_mean", &c->stats.running_mean);
      store_.add_buffer(p + ".bn.running_var", &c->stats.running_var);
      convs_.push_back(std::move(c));
      cin = o;
    }
  }
  const double eb = 1.0 / std::sqrt(static_cast<double>(cin));
  emb_w_ = store_.add_param("embed.weight", uniform_tensor({cfg_.embedding, cin}, eb, rng));
  emb_b_ = store_.add_param("embed.bias", uniform_tensor({cfg_.embedding}, eb, rng));
  std::size_t in = cfg_.embedding;
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

ModelOutput AtBackbone::forward(const Var& x, bool training, Rng& rng, Pooling pooling) {
  const Shape& xs = x.shape();
  if (xs.size() != 3 || xs[2] != cfg_.n_mels) {
    throw std::invalid_argument("at: expected input [N, T, " + std::to_string(cfg_.n_mels) + "], got " +
                                shape_str(xs));
  }
  const std::size_t n = xs[0];
  Var h = ops::reshape(ops::permute(x, {0, 2, 1}), {n, 1, xs[2], xs[1]});
  ops::Conv2dOptions same{{1, 1}, {1, 1}};
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    Conv& c = *convs_[i];
    h = ops::conv2d(h, c.w, Var(), same);
    h = ops::relu(ops::batch_norm(h, c.gamma, c.beta, c.stats, training));
    if (i % 2 == 1) h = ops::avg_pool2d(h, {2, 2});
  }
  h = ops::permute(ops::mean_axis(h, 2), {0, 2, 1});  // [N, T', C]
  h = ops::relu(ops::linear(h, emb_w_, emb_b_));
  for (const auto& [f, b] : gru_) h = ops::bigru(h, f, b);
  h = ops::dropout(h, cfg_.dropout, rng, training);
  Var frame = ops::sigmoid(ops::linear(h, frame_w_, frame_b_));
  Var clip = pooling == Pooling::ExpSoftmax ? exp_softmax_pool(frame)
                                             : attention_pool(ops::linear(h, att_w_, att_b_), frame);
  return {frame, clip};
}

Arch AtBackbone::arch() const { return to_arch(cfg_); }

}  // namespace tsed::models
