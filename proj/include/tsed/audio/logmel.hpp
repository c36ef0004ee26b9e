// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

#include "tsed/audio/audio.hpp"
#include "tsed/numerics/tensor.hpp"

namespace tsed::audio {

inline constexpr std::size_t kFftSize = 2048;
inline constexpr std::size_t kHopSize = 256;
inline constexpr double kLogFloor = 1e-10;
inline constexpr double kFeatureHopSeconds = static_cast<double>(kHopSize) / kSampleRate;

/// Time x mel log-magnitude features of one clip.
struct LogMel {
  Tensor frames;  // [T, M]
  double frame_hop_s = kFeatureHopSeconds;

  std::size_t n_frames() const { return frames.dim(0); }
  std::size_t n_mels() const { return frames.dim(1); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters on the Slaney mel scale between fmin and fmax, each
/// normalized to unit area in Hz. Shape [n_mels, n_fft/2 + 1].
Tensor mel_filterbank(std::size_t n_mels, std::size_t n_fft = kFftSize, int rate = kSampleRate, double fmin = 0.0,
                      double fmax = kSampleRate / 2.0);

/// Peak frequency (Hz) of every filter in `mel_filterbank`.
std::vector<double> mel_center_frequencies(std::size_t n_mels, double fmin = 0.0, double fmax = kSampleRate / 2.0);

/// Hann-windowed STFT (2048/256, reflect-padded by half a window), mel
/// projection of the magnitude spectrum, then ln(max(x, 1e-10)).
LogMel logmel(const Waveform& w, std::size_t n_mels);

/// Feature cache in the checkpoint binary format: one entry "logmel" [T, M].
void save_logmel(const std::filesystem::path& path, const LogMel& features);
LogMel load_logmel(const std::filesystem::path& path);

}  // namespace tsed::audio
