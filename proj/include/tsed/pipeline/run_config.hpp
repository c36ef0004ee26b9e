// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tsed/data/labels.hpp"
#include "tsed/data/synth.hpp"
#include "tsed/models/model.hpp"
#include "tsed/training/trainer.hpp"

namespace tsed::pipeline {

/// Model and training recipe of one stage.
struct StageRecipe {
  std::string model;  // "at", "crnn" or "fdy"
  std::size_t n_mels = 128;
  std::size_t width_divisor = 1;
  std::size_t gru_hidden = 0;  // 0 keeps the architecture default
  std::size_t basis_kernels = 4;
  double dropout = 0.5;
  training::TrainConfig train;
};

struct PseudoConfig {
  double threshold = 0.5;
  /// Clips whose pseudo label set is empty stay in the labeled set with an
  /// all-zero target; otherwise they fall back to plain unlabeled clips.
  bool keep_empty = true;
  models::Pooling pooling = models::Pooling::ExpSoftmax;
};

struct EvalConfig {
  std::filesystem::path manifest;  // strong manifest scored; defaults to the validation manifest
  std::string model = "stage2";    // "stage1" or "stage2"
  bool adaptive_median = true;
  double median_beta = 1.0 / 3.0;
  std::size_t median_window = 7;  // frames, used when adaptive_median is off
  double event_threshold = 0.5;
  std::size_t n_thresholds = 50;
};

struct RunConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path audio_root;  // default: data_dir/audio
  std::filesystem::path strong_manifest, weak_manifest, unlabeled_manifest, validation_manifest;
  std::filesystem::path output_dir = "runs/default";
  std::filesystem::path feature_cache;  // default: output_dir/features; "none" disables
  bool cache_features = true;
  std::vector<std::string> classes;  // empty: the synthetic vocabulary of synth.n_classes
  std::uint64_t seed = 1;
  bool deterministic = true;

  data::SynthConfig synth;
  StageRecipe stage1, stage2;
  /// Stage two consumes the pseudo-weak file; off gives the stage-2-only
  /// ablation in which the unlabeled clips carry no labels.
  bool stage2_pseudo = true;
  PseudoConfig pseudo;
  EvalConfig eval;

  RunConfig();

  data::Vocabulary vocabulary() const;
  /// Fills the derived paths and checks every value.
  void finalize();
};

/// Parses `key = value` lines ('#' starts a comment). `include = other.conf`
/// loads another file first, relative to the including file. Later
/// assignments win; `overrides` ("key=value") are applied last. Unknown
/// keys and malformed values throw std::invalid_argument naming file and
/// line.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Defaults plus overrides, without a file.
RunConfig make_run_config(const std::vector<std::string>& overrides = {});

/// Applies one "key=value" assignment.
void set_option(RunConfig& cfg, const std::string& key, const std::string& value);

/// Every recognised key with its current value, one `key = value` per line.
std::string dump_run_config(const RunConfig& cfg);

/// Builds the stage's model for `n_classes` classes.
std::unique_ptr<models::Model> build_model(const StageRecipe& recipe, std::size_t n_classes, std::uint64_t seed);

}  // namespace tsed::pipeline
