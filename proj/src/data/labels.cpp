// SPDX-License-Identifier: Apache-2.0
#include "tsed/data/labels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tsed::data {

Vocabulary::Vocabulary(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw std::invalid_argument("empty class name in vocabulary");
    if (n.find_first_of(",\t\n") != std::string::npos) {
      throw std::invalid_argument("class name '" + n + "' contains a separator character");
    }
    if (!seen.insert(n).second) throw std::invalid_argument("duplicate class name '" + n + "'");
  }
}

Vocabulary Vocabulary::desed() {
  return Vocabulary({"Alarm_bell_ringing", "Blender", "Cat", "Dishes", "Dog", "Electric_shaver_toothbrush", "Frying",
                     "Running_water", "Speech", "Vacuum_cleaner"});
}

std::size_t Vocabulary::id(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw std::invalid_argument("unknown class '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

bool Vocabulary::contains(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::vector<double> WeakLabel::multi_hot(std::size_t n_classes) const {
  std::vector<double> v(n_classes, 0.0);
  for (auto c : classes) v.at(c) = 1.0;
  return v;
}

void validate(const Event& e, std::size_t n_classes) {
  if (e.cls >= n_classes) throw std::invalid_argument("class id " + std::to_string(e.cls) + " outside vocabulary");
  if (!std::isfinite(e.onset) || !std::isfinite(e.offset)) throw std::invalid_argument("non-finite event time");
  if (e.onset < 0.0) throw std::invalid_argument("event onset " + std::to_string(e.onset) + " is negative");
  if (e.onset >= e.offset) {
    throw std::invalid_argument("event onset " + std::to_string(e.onset) + " is not before offset " +
                                std::to_string(e.offset));
  }
  if (e.offset > kClipSeconds) {
    throw std::invalid_argument("event offset " + std::to_string(e.offset) + " is past the clip end");
  }
}

WeakLabel weakify(const EventList& e) {
  WeakLabel w{e.clip_id, {}};
  for (const auto& ev : e.events) w.classes.insert(ev.cls);
  return w;
}

Tensor frame_targets(const EventList& e, std::size_t n_frames, double frame_hop_s, std::size_t n_classes) {
  if (!(frame_hop_s > 0.0)) throw std::invalid_argument("frame_targets: frame hop must be positive");
  Tensor y({n_frames, n_classes}, 0.0);
  for (const auto& ev : e.events) {
    if (ev.cls >= n_classes) throw std::invalid_argument("frame_targets: class id outside vocabulary");
    // first frame with centre >= onset, last with centre < offset
    double lo = std::ceil(ev.onset / frame_hop_s - 0.5);
    std::size_t first = lo <= 0.0 ? 0 : static_cast<std::size_t>(lo);
    for (std::size_t i = first; i < n_frames; ++i) {
      double centre = (static_cast<double>(i) + 0.5) * frame_hop_s;
      if (centre < ev.onset) continue;
      if (centre >= ev.offset) break;
      y[i * n_classes + ev.cls] = 1.0;
    }
  }
  return y;
}

Tensor clip_targets(const WeakLabel& w, std::size_t n_classes) {
  return Tensor({n_classes}, w.multi_hot(n_classes));
}

std::vector<WeakLabel> pseudo_labels(const Tensor& probs, const std::vector<std::string>& clip_ids,
                                     const PseudoLabelConfig& cfg) {
  if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0)) {
    throw std::invalid_argument("pseudo-label threshold must lie in (0, 1), got " + std::to_string(cfg.threshold));
  }
  if (probs.rank() != 2 || probs.dim(0) != clip_ids.size()) {
    throw std::invalid_argument("pseudo_labels: expected probabilities [" + std::to_string(clip_ids.size()) +
                                ", K], got " + shape_str(probs.shape()));
  }
  const std::size_t k = probs.dim(1);
  std::vector<WeakLabel> out;
  out.reserve(clip_ids.size());
  for (std::size_t n = 0; n < clip_ids.size(); ++n) {
    WeakLabel w{clip_ids[n], {}};
    for (std::size_t c = 0; c < k; ++c) {
      double p = probs[n * k + c];
      if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("pseudo_labels: probability outside [0, 1]");
      if (p >= cfg.threshold) w.classes.insert(c);
    }
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace tsed::data
