// SPDX-License-Identifier: Apache-2.0
#include "tsed/metrics/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tsed::metrics {

MedianConfig MedianConfig::uniform(const std::vector<double>& durations, double frame_hop_s, double beta) {
  MedianConfig c;
  c.duration = durations;
  c.beta.assign(durations.size(), beta);
  c.frame_hop_s = frame_hop_s;
  c.validate();
  return c;
}

void MedianConfig::validate() const {
  if (beta.size() != duration.size()) throw std::invalid_argument("median: beta and duration lengths differ");
  if (!window_override.empty() && window_override.size() != duration.size()) {
    throw std::invalid_argument("median: window_override must have one entry per class");
  }
  if (!(frame_hop_s > 0.0)) throw std::invalid_argument("median: frame hop must be positive");
  for (std::size_t c = 0; c < duration.size(); ++c) {
    if (!(beta[c] > 0.0)) throw std::invalid_argument("median: beta must be positive");
    if (!(duration[c] > 0.0)) throw std::invalid_argument("median: duration must be positive");
  }
  for (std::size_t w : window_override)
    if (w != 0 && w % 2 == 0) throw std::invalid_argument("median: override windows must be odd");
}

std::vector<double> median_durations(const std::vector<data::EventList>& lists, std::size_t n_classes,
                                     double fallback) {
  std::vector<std::vector<double>> per(n_classes);
  for (const auto& l : lists)
    for (const auto& e : l.events) {
      if (e.cls >= n_classes) throw std::invalid_argument("median_durations: class id out of range");
      per[e.cls].push_back(e.offset - e.onset);
    }
  std::vector<double> out(n_classes, fallback);
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto& v = per[c];
    if (v.empty()) continue;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    out[c] = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  }
  return out;
}

std::size_t adaptive_window(std::size_t cls, const MedianConfig& cfg) {
  cfg.validate();
  if (cls >= cfg.n_classes()) throw std::invalid_argument("adaptive_window: class id out of range");
  if (!cfg.window_override.empty() && cfg.window_override[cls] != 0) return cfg.window_override[cls];
  const double raw = cfg.duration[cls] * cfg.beta[cls] / cfg.frame_hop_s;
  auto w = static_cast<long>(std::llround(raw));
  if (w % 2 == 0) w += raw >= static_cast<double>(w) ? 1 : -1;
  return static_cast<std::size_t>(std::max(w, 1L));
}

std::vector<std::size_t> adaptive_windows(const MedianConfig& cfg) {
  std::vector<std::size_t> w(cfg.n_classes());
  for (std::size_t c = 0; c < w.size(); ++c) w[c] = adaptive_window(c, cfg);
  return w;
}

namespace {

void require_matrix(const Tensor& x, const char* who) {
  if (x.rank() != 2) throw std::invalid_argument(std::string(who) + ": expected [T, K], got " + shape_str(x.shape()));
}

}  // namespace

Tensor binarize(const Tensor& probs, double threshold) {
  require_matrix(probs, "binarize");
  Tensor out(probs.shape());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= threshold ? 1.0 : 0.0;
  return out;
}

Tensor median_filter(const Tensor& binary, const std::vector<std::size_t>& windows) {
  require_matrix(binary, "median_filter");
  const std::size_t t = binary.dim(0), k = binary.dim(1);
  if (windows.size() != k) throw std::invalid_argument("median_filter: need one window per class");
  Tensor out(binary.shape(), 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t w = windows[c];
    if (w % 2 == 0) throw std::invalid_argument("median_filter: window must be odd, got " + std::to_string(w));
    const long half = static_cast<long>(w / 2);
    // running count of ones inside the window; zero padding contributes nothing
    long ones = 0;
    for (long j = 0; j <= std::min<long>(half - 1, static_cast<long>(t) - 1); ++j) ones += binary[j * k + c] > 0.5;
    for (long i = 0; i < static_cast<long>(t); ++i) {
      const long enter = i + half, leave = i - half - 1;
      if (enter < static_cast<long>(t)) ones += binary[enter * k + c] > 0.5;
      if (leave >= 0) ones -= binary[leave * k + c] > 0.5;
      out[i * k + c] = 2 * ones > static_cast<long>(w) ? 1.0 : 0.0;
    }
  }
  return out;
}

data::EventList decode_events(const Tensor& binary, double frame_hop_s, const std::string& clip_id) {
  require_matrix(binary, "decode_events");
  if (!(frame_hop_s > 0.0)) throw std::invalid_argument("decode_events: frame hop must be positive");
  const std::size_t t = binary.dim(0), k = binary.dim(1);
  data::EventList out{clip_id, {}};
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t i = 0;
    while (i < t) {
      if (binary[i * k + c] < 0.5) {
        ++i;
        continue;
      }
      std::size_t end = i;
      while (end + 1 < t && binary[(end + 1) * k + c] > 0.5) ++end;
      const double on = std::min(static_cast<double>(i) * frame_hop_s, data::kClipSeconds);
      const double off = std::min(static_cast<double>(end + 1) * frame_hop_s, data::kClipSeconds);
      if (off > on) out.events.push_back({c, on, off});
      i = end + 1;
    }
  }
  return out;
}

data::EventList detect(const Tensor& probs, double threshold, const std::vector<std::size_t>& windows,
                       double frame_hop_s, const std::string& clip_id) {
  return decode_events(median_filter(binarize(probs, threshold), windows), frame_hop_s, clip_id);
}

}  // namespace tsed::metrics
