// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "tsed/numerics/tensor.hpp"

namespace tsed::data {

inline constexpr double kClipSeconds = 10.0;

/// Ordered class names; a class id is its position.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> names);

  /// The ten domestic-environment classes of the DESED corpus.
  static Vocabulary desed();

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t id) const { return names_.at(id); }
  const std::vector<std::string>& names() const { return names_; }

  /// Throws std::invalid_argument for unknown names.
  std::size_t id(const std::string& name) const;
  bool contains(const std::string& name) const;

 private:
  std::vector<std::string> names_;
};

struct Event {
  std::size_t cls = 0;
  double onset = 0.0;
  double offset = 0.0;

  bool operator==(const Event&) const = default;
};

struct EventList {
  std::string clip_id;
  std::vector<Event> events;
};

struct WeakLabel {
  std::string clip_id;
  std::set<std::size_t> classes;

  std::vector<double> multi_hot(std::size_t n_classes) const;
};

/// Throws std::invalid_argument unless 0 <= onset < offset <= 10 and the
/// class id is inside the vocabulary.
void validate(const Event& e, std::size_t n_classes);

/// Distinct classes of a strong annotation; timestamps are dropped.
WeakLabel weakify(const EventList& e);

/// Binary [n_frames, n_classes] matrix; cell (i, c) is 1 iff some event of
/// class c has onset <= (i + 0.5) * hop < offset.
Tensor frame_targets(const EventList& e, std::size_t n_frames, double frame_hop_s, std::size_t n_classes);

/// Multi-hot [n_classes] vector of a weak label as a tensor.
Tensor clip_targets(const WeakLabel& w, std::size_t n_classes);

struct PseudoLabelConfig {
  double threshold = 0.5;
};

/// probs [N, K] in [0, 1]; class c is kept iff probs(n, c) >= threshold.
/// Clips with no class above threshold are returned with an empty set.
std::vector<WeakLabel> pseudo_labels(const Tensor& probs, const std::vector<std::string>& clip_ids,
                                     const PseudoLabelConfig& cfg);

}  // namespace tsed::data
