// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "tsed/data/manifest.hpp"
#include "tsed/training/trainer.hpp"

namespace tsed::training {

/// Resolves clip ids to log-mel features, optionally through an on-disk
/// cache with one file per clip and mel count. A cache entry older than its
/// audio file is recomputed.
struct FeatureSource {
  std::filesystem::path audio_root;
  std::filesystem::path cache_dir;  // empty disables caching
  std::size_t n_mels = 128;

  std::filesystem::path audio_path(const std::string& clip_id) const;
  std::filesystem::path cache_path(const std::string& clip_id) const;
  /// [T, M] raw log-mel features.
  Tensor features(const std::string& clip_id) const;
};

/// Examples of one manifest. Strong clips carry their events, weak clips a
/// clip target, unlabeled clips neither.
std::vector<Example> load_examples(const data::DatasetIndex& index, const FeatureSource& source,
                                   std::size_t n_classes);

}  // namespace tsed::training
