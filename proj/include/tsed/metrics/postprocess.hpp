// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "tsed/data/labels.hpp"
#include "tsed/numerics/tensor.hpp"

namespace tsed::metrics {

/// Per-class median-filter windows derived from typical event durations.
struct MedianConfig {
  std::vector<double> beta;      // per class, > 0
  std::vector<double> duration;  // per class median event duration in seconds, > 0
  double frame_hop_s = 0.064;
  /// Optional per-class window override in frames; 0 keeps the derived value.
  std::vector<std::size_t> window_override;

  /// Same beta for every class.
  static MedianConfig uniform(const std::vector<double>& durations, double frame_hop_s, double beta = 1.0 / 3.0);

  std::size_t n_classes() const { return duration.size(); }
  void validate() const;
};

/// Median duration of each class's events; classes without events get
/// `fallback` seconds.
std::vector<double> median_durations(const std::vector<data::EventList>& lists, std::size_t n_classes,
                                     double fallback = 1.0);

/// round(duration * beta / hop) moved to the closer odd neighbour when even,
/// never below 1.
std::size_t adaptive_window(std::size_t cls, const MedianConfig& cfg);
std::vector<std::size_t> adaptive_windows(const MedianConfig& cfg);

/// probs [T, K] -> 1 where prob >= threshold.
Tensor binarize(const Tensor& probs, double threshold);

/// Sliding median per class column of a binary [T, K] matrix, zero-padded
/// at both ends. Windows must be odd.
Tensor median_filter(const Tensor& binary, const std::vector<std::size_t>& windows);

/// Maximal runs of ones per class become events [start * hop, (end+1) * hop]
/// clipped to the clip length. Events are ordered by class, then onset.
data::EventList decode_events(const Tensor& binary, double frame_hop_s, const std::string& clip_id);

/// Full post-processing chain for one operating point.
data::EventList detect(const Tensor& probs, double threshold, const std::vector<std::size_t>& windows,
                       double frame_hop_s, const std::string& clip_id);

}  // namespace tsed::metrics
