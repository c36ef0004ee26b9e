// SPDX-License-Identifier: Apache-2.0
#include "tsed/audio/logmel.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "tsed/numerics/checkpoint.hpp"

namespace tsed::audio {

namespace {

constexpr double kLinearHzPerMel = 200.0 / 3.0;
constexpr double kBreakHz = 1000.0;
constexpr double kBreakMel = kBreakHz / kLinearHzPerMel;  // 15
const double kLogStep = std::log(6.4) / 27.0;

const Tensor& cached_filterbank(std::size_t n_mels) {
  static std::mutex mu;
  static std::map<std::size_t, Tensor> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n_mels);
  if (it == cache.end()) it = cache.emplace(n_mels, mel_filterbank(n_mels)).first;
  return it->second;
}

}  // namespace

double hz_to_mel(double hz) {
  if (hz < kBreakHz) return hz / kLinearHzPerMel;
  return kBreakMel + std::log(hz / kBreakHz) / kLogStep;
}

double mel_to_hz(double mel) {
  if (mel < kBreakMel) return mel * kLinearHzPerMel;
  return kBreakHz * std::exp(kLogStep * (mel - kBreakMel));
}

std::vector<double> mel_center_frequencies(std::size_t n_mels, double fmin, double fmax) {
  auto edges = std::vector<double>(n_mels + 2);
  const double lo = hz_to_mel(fmin), hi = hz_to_mel(fmax);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  return {edges.begin() + 1, edges.end() - 1};
}

Tensor mel_filterbank(std::size_t n_mels, std::size_t n_fft, int rate, double fmin, double fmax) {
  if (n_mels == 0) throw std::invalid_argument("mel_filterbank: n_mels must be positive");
  if (fmax <= fmin) throw std::invalid_argument("mel_filterbank: fmax must exceed fmin");
  const std::size_t bins = n_fft / 2 + 1;
  std::vector<double> edges(n_mels + 2);
  const double lo = hz_to_mel(fmin), hi = hz_to_mel(fmax);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  Tensor fb({n_mels, bins}, 0.0);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    const double norm = 2.0 / (right - left);
    for (std::size_t k = 0; k < bins; ++k) {
      double f = static_cast<double>(k) * rate / static_cast<double>(n_fft);
      double rise = (f - left) / (center - left);
      double fall = (right - f) / (right - center);
      fb[m * bins + k] = std::max(0.0, std::min(rise, fall)) * norm;
    }
  }
  return fb;
}

LogMel logmel(const Waveform& w, std::size_t n_mels) {
  if (n_mels == 0) throw std::invalid_argument("logmel: n_mels must be a positive integer");
  const std::size_t n = w.samples.size();
  const std::size_t half = kFftSize / 2;
  if (n <= half) throw std::invalid_argument("logmel: waveform shorter than half a window");

  // reflect padding without repeating the edge sample
  std::vector<double> padded(n + 2 * half);
  for (std::size_t i = 0; i < half; ++i) {
    padded[i] = w.samples[half - i];
    padded[n + half + i] = w.samples[n - 2 - i];
  }
  std::copy(w.samples.begin(), w.samples.end(), padded.begin() + static_cast<std::ptrdiff_t>(half));

  std::vector<double> window(kFftSize);
  for (std::size_t i = 0; i < kFftSize; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / kFftSize);
  }

  const std::size_t n_frames = 1 + (padded.size() - kFftSize) / kHopSize;
  const std::size_t bins = kFftSize / 2 + 1;
  const Tensor& fb = cached_filterbank(n_mels);

  Eigen::FFT<double> fft;
  std::vector<double> frame(kFftSize);
  std::vector<std::complex<double>> spec;
  std::vector<double> mag(bins);
  LogMel out;
  out.frames = Tensor({n_frames, n_mels});
  for (std::size_t t = 0; t < n_frames; ++t) {
    const double* src = padded.data() + t * kHopSize;
    for (std::size_t i = 0; i < kFftSize; ++i) frame[i] = src[i] * window[i];
    fft.fwd(spec, frame);
    for (std::size_t k = 0; k < bins; ++k) mag[k] = std::abs(spec[k]);
    for (std::size_t m = 0; m < n_mels; ++m) {
      const double* row = fb.data().data() + m * bins;
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += row[k] * mag[k];
      out.frames[t * n_mels + m] = std::log(std::max(e, kLogFloor));
    }
  }
  return out;
}

void save_logmel(const std::filesystem::path& path, const LogMel& features) {
  checkpoint::save(path, {{"logmel", features.frames}});
}

LogMel load_logmel(const std::filesystem::path& path) {
  auto entries = checkpoint::load(path);
  if (entries.size() != 1 || entries[0].name != "logmel" || entries[0].value.rank() != 2) {
    throw std::runtime_error("not a log-mel cache file: " + path.string());
  }
  LogMel out;
  out.frames = std::move(entries[0].value);
  return out;
}

}  // namespace tsed::audio
