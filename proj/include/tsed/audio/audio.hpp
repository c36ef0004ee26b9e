// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

namespace tsed::audio {

inline constexpr int kSampleRate = 16000;
inline constexpr double kClipSeconds = 10.0;
inline constexpr std::size_t kClipSamples = 160000;

/// Mono clip at kSampleRate, exactly kClipSamples long after ingestion.
struct Waveform {
  std::vector<double> samples;
  int rate = kSampleRate;
};

/// Raw decoded PCM, channels interleaved, scaled to [-1, 1).
struct PcmData {
  std::vector<double> interleaved;
  int rate = 0;
  int channels = 0;
  int bits = 0;
};

/// Reads an uncompressed PCM WAV (8/16/24/32-bit integer, 1-2 channels).
/// Anything else throws with the offending header field in the message.
PcmData read_wav(const std::filesystem::path& path);

/// Writes 16-bit mono PCM.
void write_wav(const std::filesystem::path& path, const std::vector<double>& samples, int rate);

/// Polyphase windowed-sinc resampler with 64 taps per output sample.
/// Each phase is normalized to unit DC gain; edges replicate the boundary
/// sample.
std::vector<double> resample(const std::vector<double>& x, int in_rate, int out_rate);

/// Downmix to mono, resample to 16 kHz, then zero-pad or truncate to 10 s.
Waveform load_audio(const std::filesystem::path& path);

/// Same pipeline on already decoded PCM.
Waveform to_clip(const PcmData& pcm);

}  // namespace tsed::audio
