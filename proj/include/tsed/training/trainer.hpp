// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tsed/augment/augment.hpp"
#include "tsed/data/labels.hpp"
#include "tsed/metrics/postprocess.hpp"
#include "tsed/models/model.hpp"
#include "tsed/training/losses.hpp"

namespace tsed::training {

/// Mean-teacher and interpolation-consistency settings.
struct SslConfig {
  double ema_decay = 0.999;
  double consistency_weight_max = 2.0;
  std::size_t warmup_epochs = 50;
  bool ict_enabled = true;
  double ict_alpha = 0.5;
  void validate() const;
};

/// One training clip with raw (unnormalized) features.
struct Example {
  std::string clip_id;
  Tensor features;                  // [T, M]
  std::vector<data::Event> events;  // strong annotation, if any
  Tensor clip_target;               // [K] multi-hot; empty when the clip carries no clip label
};

/// The three batch sources plus a held-out validation set with strong
/// annotations. In the second stage the unlabeled source holds the clips
/// scored by the first stage; those with a clip_target get a clip loss.
struct TrainSets {
  std::size_t n_classes = 0;
  std::vector<Example> strong, weak, unlabeled, validation;
};

enum class Stage { One, Two };

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double lr_scale = 0.0;
  double consistency_weight = 0.0;
  double loss = 0.0;
  double frame_loss = 0.0;
  double clip_loss = 0.0;
  double consistency = 0.0;
  double ict = 0.0;
  std::size_t frame_terms = 0;  // clips contributing to the frame loss
  std::size_t clip_terms = 0;   // clips contributing to the clip loss
  double val_score = 0.0;
  bool best = false;
  double seconds = 0.0;
};

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 48;
  double learning_rate = 1e-3;
  /// 0 walks every source once per epoch (see BatchSampler).
  std::size_t max_batches_per_epoch = 0;
  SslConfig ssl;
  AflConfig loss;
  augment::AugmentConfig augment = augment::AugmentConfig::stage1();
  bool augment_enabled = true;
  models::Pooling train_pooling = models::Pooling::Attention;
  models::Pooling eval_pooling = models::Pooling::Attention;
  /// Stage one: also apply a frame loss on the strong clips instead of using
  /// only their weakified labels.
  bool stage1_frame_loss = false;
  /// Median filter used by the second stage's validation scoring.
  metrics::MedianConfig median;
  std::uint64_t seed = 1;
  /// Checkpoints and the CSV log go here when non-empty.
  std::filesystem::path out_dir;
  /// Extra sidecar keys written with every checkpoint.
  models::Arch checkpoint_meta;
  std::function<void(const EpochLog&)> on_epoch;

  void validate() const;
};

struct TrainResult {
  std::vector<EpochLog> history;
  std::size_t best_epoch = 0;
  double best_score = 0.0;
};

/// Trains `student` in place and leaves the best-validation weights in it.
/// Stage one: clip-level loss on weak and weakified strong clips plus
/// consistency on every clip. Stage two: frame-level loss on strong clips,
/// clip-level loss on weak and pseudo-labelled clips, plus consistency.
TrainResult train(models::Model& student, const TrainSets& sets, Stage stage, const TrainConfig& cfg);

TrainResult train_stage1(models::Model& student, const TrainSets& sets, const TrainConfig& cfg);
TrainResult train_stage2(models::Model& student, const TrainSets& sets, const TrainConfig& cfg);

/// Clip-level macro F1 of the model on clips with clip targets.
double clip_macro_f1(models::Model& model, const std::vector<Example>& clips, models::Pooling pooling,
                     double threshold = 0.5);

/// Frame-level micro F1 against the clips' strong annotations.
double frame_micro_f1(models::Model& model, const std::vector<Example>& clips, double threshold = 0.5);

/// PSDS of scenario 1 plus scenario 2 on strongly annotated clips.
double psds_sum(models::Model& model, const std::vector<Example>& clips, std::size_t n_classes,
                const metrics::MedianConfig& median);

/// Frame hop in seconds of the model's output frames.
double output_hop_seconds(const models::Model& model);

}  // namespace tsed::training
