// SPDX-License-Identifier: Apache-2.0
#include "tsed/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tsed/audio/audio.hpp"
#include "tsed/data/manifest.hpp"
#include "tsed/numerics/random.hpp"

namespace tsed::data {

namespace {

constexpr double kFade = 0.02;  // seconds of raised-cosine ramp at both ends
constexpr std::uint64_t kPlanStream = 0;
constexpr std::uint64_t kRenderStream = 1000;

double to_ms(double s) { return std::round(s * 1000.0) / 1000.0; }

bool overlaps_same_class(const std::vector<Event>& events, const Event& e) {
  return std::any_of(events.begin(), events.end(), [&](const Event& o) {
    return o.cls == e.cls && e.onset < o.offset && o.onset < e.offset;
  });
}

double envelope(double t, double duration) {
  const double ramp = std::min(kFade, duration / 2.0);
  if (t < ramp) return 0.5 - 0.5 * std::cos(std::numbers::pi * t / ramp);
  if (t > duration - ramp) return 0.5 - 0.5 * std::cos(std::numbers::pi * (duration - t) / ramp);
  return 1.0;
}

void add_event(std::vector<double>& out, const Event& e, const ClassSound& sound, double level, Rng& rng) {
  const double rate = audio::kSampleRate;
  const auto first = static_cast<std::size_t>(std::lround(e.onset * rate));
  const auto last = std::min(out.size(), static_cast<std::size_t>(std::lround(e.offset * rate)));
  const double duration = e.offset - e.onset;
  const double f0 = sound.frequency * uniform(rng, 0.97, 1.03);

  // Noise bands are a dense sum of random-phase partials inside +-15 % of f0.
  std::vector<std::pair<double, double>> partials;  // (frequency, phase)
  if (sound.kind == ClassSound::Kind::NoiseBand)
    for (int i = 0; i < 48; ++i)
      partials.emplace_back(f0 * uniform(rng, 0.85, 1.15), uniform(rng, 0.0, 2.0 * std::numbers::pi));
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double norm = sound.kind == ClassSound::Kind::NoiseBand ? 1.0 / std::sqrt(partials.size() / 2.0) : 1.0;

  for (std::size_t n = first; n < last; ++n) {
    const double t = static_cast<double>(n) / rate - e.onset;
    const double w = 2.0 * std::numbers::pi * t;
    double v = 0.0;
    switch (sound.kind) {
      case ClassSound::Kind::Harmonic:
        v = 0.6 * std::sin(w * f0 + phase) + 0.3 * std::sin(2.0 * w * f0) + 0.1 * std::sin(3.0 * w * f0);
        break;
      case ClassSound::Kind::NoiseBand:
        for (const auto& [f, ph] : partials) v += std::sin(w * f + ph);
        v *= norm * 0.5;
        break;
      case ClassSound::Kind::Tremolo:
        v = std::sin(w * f0 + phase) * (0.8 + 0.2 * std::sin(w * 6.0));
        break;
    }
    out[n] += level * envelope(t, duration) * v;
  }
}

}  // namespace

void SynthConfig::validate() const {
  if (n_clips == 0) throw std::invalid_argument("synth: n_clips must be positive");
  if (n_classes == 0 || n_classes > 10) throw std::invalid_argument("synth: n_classes must be in [1, 10]");
  for (double f : {strong_fraction, weak_fraction, unlabeled_fraction})
    if (f < 0.0 || f > 1.0) throw std::invalid_argument("synth: split fractions must be in [0, 1]");
  if (strong_fraction + weak_fraction + unlabeled_fraction > 1.0 + 1e-12)
    throw std::invalid_argument("synth: split fractions sum above 1");
  if (min_events > max_events) throw std::invalid_argument("synth: min_events > max_events");
  if (!(min_duration > 0.0) || min_duration > max_duration || max_duration > kClipSeconds)
    throw std::invalid_argument("synth: need 0 < min_duration <= max_duration <= 10");
  if (background_level < 0.0 || min_event_level < 0.0 || min_event_level > max_event_level)
    throw std::invalid_argument("synth: invalid levels");
}

Vocabulary synth_vocabulary(std::size_t n_classes) {
  const auto all = Vocabulary::desed().names();
  if (n_classes == 0 || n_classes > all.size()) throw std::invalid_argument("synth: n_classes must be in [1, 10]");
  return Vocabulary(std::vector<std::string>(all.begin(), all.begin() + static_cast<long>(n_classes)));
}

ClassSound class_sound(std::size_t cls, std::size_t n_classes) {
  if (cls >= n_classes) throw std::invalid_argument("class_sound: class out of range");
  // centre frequencies spread log-uniformly over 250 Hz .. 5 kHz
  const double pos = n_classes == 1 ? 0.0 : static_cast<double>(cls) / static_cast<double>(n_classes - 1);
  const double f = 250.0 * std::pow(20.0, pos);
  static constexpr ClassSound::Kind kinds[] = {ClassSound::Kind::Harmonic, ClassSound::Kind::NoiseBand,
                                               ClassSound::Kind::Tremolo};
  return {kinds[cls % 3], f};
}

SynthPlan plan_corpus(const SynthConfig& cfg) {
  cfg.validate();
  SynthPlan plan;
  plan.vocab = synth_vocabulary(cfg.n_classes);
  Rng rng = derive_rng(cfg.seed, kPlanStream);
  for (std::size_t i = 0; i < cfg.n_clips; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04zu.wav", i);
    EventList clip{id, {}};
    const auto n = static_cast<std::size_t>(
        uniform_int(rng, static_cast<long>(cfg.min_events), static_cast<long>(cfg.max_events)));
    for (std::size_t j = 0; j < n; ++j) {
      for (int attempt = 0; attempt < 20; ++attempt) {
        Event e;
        e.cls = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long>(cfg.n_classes) - 1));
        const double dur = to_ms(uniform(rng, cfg.min_duration, cfg.max_duration));
        e.onset = to_ms(uniform(rng, 0.0, kClipSeconds - dur));
        e.offset = std::min(kClipSeconds, to_ms(e.onset + dur));
        if (overlaps_same_class(clip.events, e)) continue;
        clip.events.push_back(e);
        break;
      }
    }
    std::sort(clip.events.begin(), clip.events.end(),
              [](const Event& a, const Event& b) { return a.onset < b.onset || (a.onset == b.onset && a.cls < b.cls); });
    plan.truth.push_back(std::move(clip));
  }

  const auto count = [&](double f) { return static_cast<std::size_t>(std::lround(f * static_cast<double>(cfg.n_clips))); };
  const std::size_t n_strong = std::min(cfg.n_clips, count(cfg.strong_fraction));
  const std::size_t n_weak = std::min(cfg.n_clips - n_strong, count(cfg.weak_fraction));
  const std::size_t n_unlabeled = std::min(cfg.n_clips - n_strong - n_weak, count(cfg.unlabeled_fraction));
  for (std::size_t i = 0; i < cfg.n_clips; ++i) {
    if (i < n_strong)
      plan.strong.push_back(i);
    else if (i < n_strong + n_weak)
      plan.weak.push_back(i);
    else if (i < n_strong + n_weak + n_unlabeled)
      plan.unlabeled.push_back(i);
    else
      plan.validation.push_back(i);
  }
  return plan;
}

std::vector<double> render_clip(const EventList& clip, std::size_t clip_index, const SynthConfig& cfg) {
  Rng rng = derive_rng(cfg.seed, kRenderStream + clip_index);
  std::vector<double> out(audio::kClipSamples);
  for (auto& v : out) v = normal(rng, 0.0, cfg.background_level);
  for (const auto& e : clip.events) {
    validate(e, cfg.n_classes);
    add_event(out, e, class_sound(e.cls, cfg.n_classes), uniform(rng, cfg.min_event_level, cfg.max_event_level), rng);
  }
  for (auto& v : out) v = std::clamp(v, -1.0, 32767.0 / 32768.0);
  return out;
}

SynthPlan write_corpus(const std::filesystem::path& out, const SynthConfig& cfg) {
  SynthPlan plan = plan_corpus(cfg);
  for (std::size_t i = 0; i < plan.truth.size(); ++i)
    audio::write_wav(out / CorpusLayout::kAudioDir / plan.truth[i].clip_id, render_clip(plan.truth[i], i, cfg),
                     audio::kSampleRate);

  auto pick = [&](const std::vector<std::size_t>& idx) {
    std::vector<EventList> v;
    for (std::size_t i : idx) v.push_back(plan.truth[i]);
    return v;
  };
  std::vector<WeakLabel> weak;
  for (const auto& c : pick(plan.weak)) weak.push_back(weakify(c));
  std::vector<std::string> unlabeled;
  for (std::size_t i : plan.unlabeled) unlabeled.push_back(plan.truth[i].clip_id);

  write_strong_manifest(out / CorpusLayout::kStrong, pick(plan.strong), plan.vocab);
  write_weak_manifest(out / CorpusLayout::kWeak, weak, plan.vocab);
  write_unlabeled_manifest(out / CorpusLayout::kUnlabeled, unlabeled);
  write_strong_manifest(out / CorpusLayout::kValidation, pick(plan.validation), plan.vocab);
  return plan;
}

}  // namespace tsed::data
