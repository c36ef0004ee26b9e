// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tsed/data/labels.hpp"

namespace tsed::data {

/// Desk-scale stand-in corpus: 10 s clips of class-specific tone and noise
/// events over a noise floor.
struct SynthConfig {
  std::size_t n_clips = 60;
  std::size_t n_classes = 3;
  std::uint64_t seed = 1;
  /// Split fractions; validation receives the remainder.
  double strong_fraction = 0.2;
  double weak_fraction = 0.2;
  double unlabeled_fraction = 0.4;
  std::size_t min_events = 1;
  std::size_t max_events = 3;
  double min_duration = 0.5;
  double max_duration = 4.0;
  /// Standard deviation of the background noise and the range of event peak
  /// amplitudes, in full-scale units.
  double background_level = 0.003;
  double min_event_level = 0.1;
  double max_event_level = 0.3;

  void validate() const;
};

/// Per-class synthesis recipe.
struct ClassSound {
  enum class Kind { Harmonic, NoiseBand, Tremolo };
  Kind kind = Kind::Harmonic;
  double frequency = 440.0;  // Hz
};

/// Synthesis plan of the whole corpus. `truth` holds the exact events of
/// every clip; the split vectors hold indices into it.
struct SynthPlan {
  Vocabulary vocab;
  std::vector<EventList> truth;
  std::vector<std::size_t> strong, weak, unlabeled, validation;
};

/// Class names for synthetic corpora: the first n DESED class names.
Vocabulary synth_vocabulary(std::size_t n_classes);

ClassSound class_sound(std::size_t cls, std::size_t n_classes);

/// Draws events and splits without rendering audio. Onsets and offsets are
/// whole milliseconds; events of one class never overlap within a clip.
SynthPlan plan_corpus(const SynthConfig& cfg);

/// Renders one 16 kHz, 10 s clip of the plan.
std::vector<double> render_clip(const EventList& clip, std::size_t clip_index, const SynthConfig& cfg);

/// File names written by `write_corpus`, relative to its output directory.
struct CorpusLayout {
  static constexpr const char* kAudioDir = "audio";
  static constexpr const char* kStrong = "strong.tsv";
  static constexpr const char* kWeak = "weak.tsv";
  static constexpr const char* kUnlabeled = "unlabeled.tsv";
  static constexpr const char* kValidation = "validation.tsv";
};

/// Writes every clip as 16-bit WAV under `<out>/audio/` plus the strong,
/// weak, unlabeled and validation manifests. Byte-identical for a fixed
/// config.
SynthPlan write_corpus(const std::filesystem::path& out, const SynthConfig& cfg);

}  // namespace tsed::data
