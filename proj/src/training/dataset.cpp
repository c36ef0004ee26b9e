// SPDX-License-Identifier: Apache-2.0
#include "tsed/training/dataset.hpp"

#include <stdexcept>

#include "tsed/audio/logmel.hpp"

namespace tsed::training {

namespace {

// The cache stores 32-bit floats; rounding fresh features the same way makes
// cold and warm runs see identical inputs.
Tensor as_float32(Tensor t) {
  for (auto& v : t.storage()) v = static_cast<double>(static_cast<float>(v));
  return t;
}

}  // namespace

std::filesystem::path FeatureSource::audio_path(const std::string& clip_id) const { return audio_root / clip_id; }

std::filesystem::path FeatureSource::cache_path(const std::string& clip_id) const {
  return cache_dir / (clip_id + ".mel" + std::to_string(n_mels) + ".bin");
}

Tensor FeatureSource::features(const std::string& clip_id) const {
  const auto wav = audio_path(clip_id);
  if (!std::filesystem::exists(wav)) throw std::runtime_error("audio file not found: " + wav.string());
  if (!cache_dir.empty()) {
    const auto cached = cache_path(clip_id);
    if (std::filesystem::exists(cached) &&
        std::filesystem::last_write_time(cached) >= std::filesystem::last_write_time(wav)) {
      audio::LogMel m = audio::load_logmel(cached);
      if (m.n_mels() == n_mels) return std::move(m.frames);
    }
    audio::LogMel m = audio::logmel(audio::load_audio(wav), n_mels);
    m.frames = as_float32(std::move(m.frames));
    audio::save_logmel(cached, m);
    return std::move(m.frames);
  }
  return as_float32(audio::logmel(audio::load_audio(wav), n_mels).frames);
}

std::vector<Example> load_examples(const data::DatasetIndex& index, const FeatureSource& source,
                                   std::size_t n_classes) {
  std::vector<Example> out;
  switch (index.kind) {
    case data::ManifestKind::Strong:
      for (const auto& c : index.strong) out.push_back({c.clip_id, source.features(c.clip_id), c.events, {}});
      break;
    case data::ManifestKind::Weak:
      for (const auto& c : index.weak)
        out.push_back({c.clip_id, source.features(c.clip_id), {}, data::clip_targets(c, n_classes)});
      break;
    case data::ManifestKind::Unlabeled:
      for (const auto& c : index.clips) out.push_back({c, source.features(c), {}, {}});
      break;
  }
  return out;
}

}  // namespace tsed::training
