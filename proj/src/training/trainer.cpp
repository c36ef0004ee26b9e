// SPDX-License-Identifier: Apache-2.0
#include "tsed/training/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <array>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "tsed/audio/logmel.hpp"
#include "tsed/data/batching.hpp"
#include "tsed/metrics/psds.hpp"
#include "tsed/metrics/scores.hpp"
#include "tsed/numerics/optim.hpp"

namespace tsed::training {

using models::Model;

void SslConfig::validate() const {
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw std::invalid_argument("ssl: ema_decay must lie in [0, 1]");
  if (!(consistency_weight_max >= 0.0)) throw std::invalid_argument("ssl: consistency weight must be non-negative");
  if (ict_enabled && !(ict_alpha > 0.0)) throw std::invalid_argument("ssl: ict_alpha must be positive");
}

void TrainConfig::validate() const {
  ssl.validate();
  loss.validate();
  augment.validate();
  if (epochs == 0) throw std::invalid_argument("train: epochs must be positive");
  if (batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
}

double output_hop_seconds(const Model& model) {
  return static_cast<double>(model.time_ratio()) * audio::kFeatureHopSeconds;
}

namespace {

Tensor weak_target(const Example& e, std::size_t k) {
  if (!e.clip_target.empty()) return e.clip_target;
  return data::clip_targets(data::weakify({e.clip_id, e.events}), k);
}

Tensor strong_target(const Model& m, const Example& e, std::size_t k) {
  return data::frame_targets({e.clip_id, e.events}, m.output_frames(e.features.dim(0)), output_hop_seconds(m), k);
}

struct Row {
  Tensor x;      // [T, M] normalized
  Tensor frame;  // [T', K] or empty
  Tensor clip;   // [K] or empty
  int group = 0;
};

Tensor stack(const std::vector<Tensor>& parts) {
  Shape s = parts.front().shape();
  s.insert(s.begin(), parts.size());
  Tensor out(s);
  const std::size_t n = parts.front().size();
  for (std::size_t i = 0; i < parts.size(); ++i) std::copy_n(parts[i].data().begin(), n, out.storage().begin() + i * n);
  return out;
}

void augment_rows(std::vector<Row>& rows, const augment::AugmentConfig& cfg, std::size_t ratio, Rng& rng) {
  const bool shift = cfg.frame_shift && bernoulli(rng, cfg.apply_prob);
  const bool mask = cfg.time_mask && bernoulli(rng, cfg.apply_prob);
  const bool noise = cfg.noise && bernoulli(rng, cfg.apply_prob);
  const bool filt = cfg.filter_aug && bernoulli(rng, cfg.apply_prob);
  const bool mixup = cfg.mixup && bernoulli(rng, cfg.apply_prob);
  for (auto& r : rows) {
    if (shift) augment::frame_shift(r.x, r.frame, r.frame.empty() ? 1 : ratio, rng, cfg);
    if (mask) r.x = augment::time_mask(r.x, rng, cfg);
    if (noise) r.x = augment::add_gaussian_noise(r.x, rng, cfg);
    if (filt) r.x = augment::filter_augment(r.x, rng, cfg);
  }
  if (!mixup) return;
  // mix only rows of the same kind so targets stay comparable
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) groups[rows[i].group].push_back(i);
  for (auto& [g, idx] : groups) {
    if (idx.size() < 2) continue;
    std::vector<std::size_t> partner = idx;
    std::shuffle(partner.begin(), partner.end(), rng);
    const double lambda = augment::draw_mixup_lambda(rng, cfg);
    std::vector<Row> src;
    for (std::size_t j : partner) src.push_back(rows[j]);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      Row& r = rows[idx[i]];
      r.x = augment::mix(r.x, src[i].x, lambda);
      if (!r.frame.empty()) r.frame = augment::mix(r.frame, src[i].frame, lambda);
      if (!r.clip.empty()) r.clip = augment::mix(r.clip, src[i].clip, lambda);
    }
  }
}

void check_examples(const std::vector<Example>& v, const Model& m, std::size_t& frames, const char* what) {
  for (const auto& e : v) {
    if (e.features.rank() != 2 || e.features.dim(1) != m.n_mels()) {
      throw std::invalid_argument(std::string(what) + " clip '" + e.clip_id + "': features " +
                                  shape_str(e.features.shape()) + " do not have " + std::to_string(m.n_mels()) +
                                  " mel bins");
    }
    if (frames == 0) frames = e.features.dim(0);
    if (e.features.dim(0) != frames) {
      throw std::invalid_argument(std::string(what) + " clip '" + e.clip_id + "' has " +
                                  std::to_string(e.features.dim(0)) + " frames, expected " + std::to_string(frames));
    }
    if (!e.clip_target.empty() && e.clip_target.size() != m.n_classes()) {
      throw std::invalid_argument(std::string(what) + " clip '" + e.clip_id + "': clip target has wrong size");
    }
    for (const auto& ev : e.events) data::validate(ev, m.n_classes());
  }
}

void write_log_header(std::ofstream& os) {
  os << "epoch,steps,lr_scale,consistency_weight,loss,frame_loss,clip_loss,consistency,ict,frame_terms,clip_terms,"
        "val_score,best\n";
}

void write_log_row(std::ofstream& os, const EpochLog& l) {
  os << l.epoch << ',' << l.steps << ',' << l.lr_scale << ',' << l.consistency_weight << ',' << l.loss << ','
     << l.frame_loss << ',' << l.clip_loss << ',' << l.consistency << ',' << l.ict << ',' << l.frame_terms << ','
     << l.clip_terms << ',' << l.val_score << ',' << (l.best ? 1 : 0) << '\n';
  os.flush();
}

}  // namespace

TrainResult train(Model& student, const TrainSets& sets, Stage stage, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t k = sets.n_classes;
  if (k != student.n_classes()) {
    throw std::invalid_argument("train: model predicts " + std::to_string(student.n_classes()) + " classes, data has " +
                                std::to_string(k));
  }
  std::size_t frames = 0;
  check_examples(sets.strong, student, frames, "strong");
  check_examples(sets.weak, student, frames, "weak");
  check_examples(sets.unlabeled, student, frames, "unlabeled");
  check_examples(sets.validation, student, frames, "validation");
  for (const auto& e : sets.weak)
    if (e.clip_target.empty()) throw std::invalid_argument("train: weak clip '" + e.clip_id + "' has no label");

  const bool pseudo = stage == Stage::Two &&
                      std::any_of(sets.unlabeled.begin(), sets.unlabeled.end(),
                                  [](const Example& e) { return !e.clip_target.empty(); });
  if (sets.strong.empty() && sets.weak.empty() && !pseudo) {
    throw std::invalid_argument(stage == Stage::One ? "stage 1 needs weak or weakified (strong) clips"
                                                    : "stage 2 needs strong, weak or pseudo-labelled clips");
  }
  const bool frame_loss_on_strong = stage == Stage::Two || cfg.stage1_frame_loss;
  const bool clip_loss_on_strong = stage == Stage::One;

  // normalization statistics over every training clip
  {
    std::vector<const Tensor*> feats;
    for (const auto* set : {&sets.strong, &sets.weak, &sets.unlabeled})
      for (const auto& e : *set) feats.push_back(&e.features);
    student.scaler().fit(feats, student.n_mels());
  }
  auto teacher = models::make_model(student.arch());
  teacher->store().copy_from(student.store());

  metrics::MedianConfig median = cfg.median;
  if (stage == Stage::Two && median.n_classes() == 0) {
    std::vector<data::EventList> lists;
    for (const auto& e : sets.strong) lists.push_back({e.clip_id, e.events});
    median = metrics::MedianConfig::uniform(metrics::median_durations(lists, k), output_hop_seconds(student));
  }

  Rng aug_rng = derive_rng(cfg.seed, 1), drop_rng = derive_rng(cfg.seed, 2), teacher_rng = derive_rng(cfg.seed, 3),
      ict_rng = derive_rng(cfg.seed, 4);
  const std::array<std::size_t, 3> sizes{sets.strong.size(), sets.weak.size(), sets.unlabeled.size()};
  data::BatchSampler sampler(sizes, data::BatchPlan::for_batch(cfg.batch_size).redistributed(sizes),
                             derive_rng(cfg.seed, 0)());
  std::size_t steps = sampler.batches_per_epoch();
  if (cfg.max_batches_per_epoch) steps = std::min(steps, cfg.max_batches_per_epoch);

  AdamState opt;
  opt.lr = cfg.learning_rate;

  std::ofstream log;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    log.open(cfg.out_dir / "log.csv");
    if (!log) throw std::runtime_error("cannot write " + (cfg.out_dir / "log.csv").string());
    write_log_header(log);
  }

  TrainResult result;
  std::vector<NamedTensor> best_state;
  double best = -1.0;
  std::size_t global_step = 0;
  const std::array<const std::vector<Example>*, 3> source{&sets.strong, &sets.weak, &sets.unlabeled};

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochLog el;
    el.epoch = epoch;
    el.steps = steps;
    for (std::size_t step = 0; step < steps; ++step, ++global_step) {
      const double ramp = warmup_coefficient(static_cast<double>(epoch) + static_cast<double>(step) / steps,
                                             cfg.ssl.warmup_epochs);
      const double w = cfg.ssl.consistency_weight_max * ramp;

      std::vector<Row> rows;
      for (const auto& item : sampler.next()) {
        const Example& e = (*source[static_cast<int>(item.source)])[item.index];
        Row r;
        r.x = student.scaler().apply(e.features);
        switch (item.source) {
          case data::Source::Strong:
            r.group = 0;
            if (frame_loss_on_strong) r.frame = strong_target(student, e, k);
            if (clip_loss_on_strong) r.clip = weak_target(e, k);
            break;
          case data::Source::Weak:
            r.group = 1;
            r.clip = e.clip_target;
            break;
          case data::Source::Unlabeled:
            r.group = 2;
            if (stage == Stage::Two && !e.clip_target.empty()) {
              r.clip = e.clip_target;
              r.group = 3;
            }
            break;
        }
        rows.push_back(std::move(r));
      }
      if (cfg.augment_enabled) augment_rows(rows, cfg.augment, student.time_ratio(), aug_rng);

      std::vector<Tensor> xs, ft, ct;
      std::vector<std::size_t> frame_idx, clip_idx;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        xs.push_back(rows[i].x);
        if (!rows[i].frame.empty()) {
          frame_idx.push_back(i);
          ft.push_back(rows[i].frame);
        }
        if (!rows[i].clip.empty()) {
          clip_idx.push_back(i);
          ct.push_back(rows[i].clip);
        }
      }
      Var x(stack(xs));
      models::ModelOutput out = student.forward(x, true, drop_rng, cfg.train_pooling);

      Var total(Tensor::scalar(0.0));
      if (!frame_idx.empty()) {
        Var l = afl_loss(ops::take(out.frame, frame_idx), stack(ft), cfg.loss);
        el.frame_loss += l.value()[0] / steps;
        total = ops::add(total, l);
      }
      if (!clip_idx.empty()) {
        Var l = afl_loss(ops::take(out.clip, clip_idx), stack(ct), cfg.loss);
        el.clip_loss += l.value()[0] / steps;
        total = ops::add(total, l);
      }
      el.frame_terms += frame_idx.size();
      el.clip_terms += clip_idx.size();

      if (w > 0.0) {
        models::ModelOutput t;
        {
          NoGradGuard guard;
          t = teacher->forward(x, true, teacher_rng, cfg.train_pooling);
        }
        Var c = consistency_loss(out, t);
        el.consistency += c.value()[0] / steps;
        total = ops::add(total, ops::scale(c, w));
        if (cfg.ssl.ict_enabled && rows.size() > 1) {
          std::vector<std::size_t> perm(rows.size());
          std::iota(perm.begin(), perm.end(), 0);
          std::shuffle(perm.begin(), perm.end(), ict_rng);
          const double lambda = beta(ict_rng, cfg.ssl.ict_alpha, cfg.ssl.ict_alpha);
          Var x2(ops::take(x, perm).value());
          Var ict = ict_term(x, x2, lambda, student, *teacher, drop_rng, teacher_rng, cfg.train_pooling);
          el.ict += ict.value()[0] / steps;
          total = ops::add(total, ops::scale(ict, w));
        }
      }
      el.loss += total.value()[0] / steps;

      backward(total);
      adam_step(student.store().params(), opt, ramp);
      student.store().zero_grad();
      const double decay = std::min(1.0 - 1.0 / static_cast<double>(global_step + 1), cfg.ssl.ema_decay);
      ema_update(teacher->store().params(), student.store().params(), decay);
      el.lr_scale = ramp;
      el.consistency_weight = w;
    }

    if (!sets.validation.empty()) {
      el.val_score = stage == Stage::One ? clip_macro_f1(student, sets.validation, cfg.eval_pooling)
                                         : psds_sum(student, sets.validation, k, median);
    }
    // without validation data the latest epoch wins
    if (sets.validation.empty() || el.val_score > best) {
      best = el.val_score;
      el.best = true;
      result.best_epoch = epoch;
      result.best_score = el.val_score;
      best_state = student.store().state();
      if (!cfg.out_dir.empty()) models::save_model(cfg.out_dir / "best.ckpt", student, cfg.checkpoint_meta);
    }
    el.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log.is_open()) write_log_row(log, el);
    if (cfg.on_epoch) cfg.on_epoch(el);
    result.history.push_back(el);
  }
  if (!cfg.out_dir.empty()) models::save_model(cfg.out_dir / "last.ckpt", student, cfg.checkpoint_meta);
  student.store().load_state(best_state);
  return result;
}

TrainResult train_stage1(Model& student, const TrainSets& sets, const TrainConfig& cfg) {
  return train(student, sets, Stage::One, cfg);
}

TrainResult train_stage2(Model& student, const TrainSets& sets, const TrainConfig& cfg) {
  return train(student, sets, Stage::Two, cfg);
}

double clip_macro_f1(Model& model, const std::vector<Example>& clips, models::Pooling pooling, double threshold) {
  if (clips.empty()) throw std::invalid_argument("clip_macro_f1: no clips");
  const std::size_t k = model.n_classes();
  Tensor probs({clips.size(), k}), targets({clips.size(), k});
  for (std::size_t i = 0; i < clips.size(); ++i) {
    Tensor p = model.infer(clips[i].features, pooling).clip;
    Tensor y = weak_target(clips[i], k);
    std::copy_n(p.data().begin(), k, probs.storage().begin() + i * k);
    std::copy_n(y.data().begin(), k, targets.storage().begin() + i * k);
  }
  return metrics::macro_f1(probs, targets, threshold);
}

double frame_micro_f1(Model& model, const std::vector<Example>& clips, double threshold) {
  if (clips.empty()) throw std::invalid_argument("frame_micro_f1: no clips");
  std::vector<Tensor> probs, targets;
  for (const auto& c : clips) {
    probs.push_back(model.infer(c.features).frame);
    targets.push_back(strong_target(model, c, model.n_classes()));
  }
  return metrics::micro_f1(stack(probs), stack(targets), threshold);
}

double psds_sum(Model& model, const std::vector<Example>& clips, std::size_t k, const metrics::MedianConfig& median) {
  if (clips.empty()) throw std::invalid_argument("psds_sum: no clips");
  std::vector<metrics::ClipPosteriors> preds;
  std::vector<data::EventList> refs;
  for (const auto& c : clips) {
    preds.push_back({c.clip_id, model.infer(c.features).frame});
    refs.push_back({c.clip_id, c.events});
  }
  const double secs = data::kClipSeconds * static_cast<double>(clips.size());
  double s = 0.0;
  for (const auto& cfg : {metrics::PsdsConfig::scenario1(), metrics::PsdsConfig::scenario2()}) {
    try {
      s += metrics::compute_psds(preds, refs, k, median, cfg, secs).score;
    } catch (const std::domain_error&) {
      // no reference events: nothing to detect, nothing to score
    }
  }
  return s;
}

}  // namespace tsed::training
