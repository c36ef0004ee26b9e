// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "tsed/audio/audio.hpp"
#include "tsed/audio/logmel.hpp"

namespace tsed::audio {
namespace {

std::filesystem::path tmp(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "tsed_audio_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Minimal independent WAV writer for arbitrary layouts.
void write_raw_wav(const std::filesystem::path& path, std::uint16_t format, int channels, int rate, int bits,
                   const std::vector<std::int32_t>& interleaved) {
  std::ofstream os(path, std::ios::binary);
  auto w32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF)); };
  auto w16 = [&](std::uint16_t v) { for (int i = 0; i < 2; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF)); };
  const std::uint32_t width = static_cast<std::uint32_t>(bits / 8);
  const std::uint32_t data_len = static_cast<std::uint32_t>(interleaved.size()) * width;
  os.write("RIFF", 4);
  w32(36 + data_len);
  os.write("WAVEfmt ", 8);
  w32(16);
  w16(format);
  w16(static_cast<std::uint16_t>(channels));
  w32(static_cast<std::uint32_t>(rate));
  w32(static_cast<std::uint32_t>(rate * channels) * width);
  w16(static_cast<std::uint16_t>(channels * static_cast<int>(width)));
  w16(static_cast<std::uint16_t>(bits));
  os.write("data", 4);
  w32(data_len);
  for (auto s : interleaved)
    for (std::uint32_t i = 0; i < width; ++i) os.put(static_cast<char>((static_cast<std::uint32_t>(s) >> (8 * i)) & 0xFF));
}

TEST(LoadAudio, FullLengthMonoIsUnchanged) {
  std::vector<double> x(kClipSamples);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(static_cast<long>(i % 2001) - 1000) / 32768.0;
  write_wav(tmp("full.wav"), x, 16000);
  Waveform w = load_audio(tmp("full.wav"));
  ASSERT_EQ(w.samples.size(), kClipSamples);
  EXPECT_EQ(w.samples, x);
}

TEST(LoadAudio, ShortClipIsPaddedWithExactSilence) {
  std::vector<double> x(4 * 16000, 0.25);
  write_wav(tmp("short.wav"), x, 16000);
  Waveform w = load_audio(tmp("short.wav"));
  ASSERT_EQ(w.samples.size(), kClipSamples);
  for (std::size_t i = 0; i < 64000; ++i) ASSERT_EQ(w.samples[i], 0.25);
  for (std::size_t i = 64000; i < kClipSamples; ++i) ASSERT_EQ(w.samples[i], 0.0);
}

TEST(LoadAudio, LongClipIsTruncated) {
  write_wav(tmp("long.wav"), std::vector<double>(12 * 16000, 0.5), 16000);
  EXPECT_EQ(load_audio(tmp("long.wav")).samples.size(), kClipSamples);
}

TEST(LoadAudio, StereoResamplePreservesDc) {
  std::vector<std::int32_t> frames(2 * 44100 * 10, 16384);  // 0.5 in 16-bit
  write_raw_wav(tmp("stereo.wav"), 1, 2, 44100, 16, frames);
  Waveform w = load_audio(tmp("stereo.wav"));
  ASSERT_EQ(w.samples.size(), kClipSamples);
  for (double s : w.samples) ASSERT_NEAR(s, 0.5, 1e-3);
}

TEST(LoadAudio, DecodesEightAndTwentyFourBit) {
  write_raw_wav(tmp("u8.wav"), 1, 1, 16000, 8, std::vector<std::int32_t>(100, 192));
  EXPECT_DOUBLE_EQ(read_wav(tmp("u8.wav")).interleaved[0], 0.5);
  write_raw_wav(tmp("s24.wav"), 1, 1, 16000, 24, std::vector<std::int32_t>(100, -4194304));
  EXPECT_DOUBLE_EQ(read_wav(tmp("s24.wav")).interleaved[0], -0.5);
}

TEST(LoadAudio, CompressedOrOddFilesNameTheProblem) {
  write_raw_wav(tmp("float.wav"), 3, 1, 16000, 32, std::vector<std::int32_t>(10, 0));
  try {
    load_audio(tmp("float.wav"));
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("format tag 3"), std::string::npos) << e.what();
  }
  write_raw_wav(tmp("quad.wav"), 1, 4, 16000, 16, std::vector<std::int32_t>(40, 0));
  try {
    load_audio(tmp("quad.wav"));
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("channel count 4"), std::string::npos) << e.what();
  }
  std::ofstream(tmp("junk.wav")) << "this is not audio";
  EXPECT_THROW(load_audio(tmp("junk.wav")), std::runtime_error);
  EXPECT_THROW(load_audio(tmp("missing.wav")), std::runtime_error);
}

Waveform tone(double hz, double amp = 0.5) {
  Waveform w;
  w.samples.resize(kClipSamples);
  for (std::size_t i = 0; i < kClipSamples; ++i) w.samples[i] = amp * std::sin(2 * std::numbers::pi * hz * i / 16000.0);
  return w;
}

TEST(LogMelTest, ShapeForTenSecondClip) {
  LogMel f = logmel(tone(440), 128);
  EXPECT_EQ(f.frames.shape(), (Shape{626, 128}));
  EXPECT_DOUBLE_EQ(f.frame_hop_s, 0.016);
  EXPECT_EQ(logmel(tone(440), 64).frames.shape(), (Shape{626, 64}));
}

TEST(LogMelTest, SilenceIsTheFloor) {
  Waveform w;
  w.samples.assign(kClipSamples, 0.0);
  LogMel f = logmel(w, 64);
  for (double v : f.frames.data()) ASSERT_EQ(v, std::log(1e-10));
}

TEST(LogMelTest, RejectsZeroMels) { EXPECT_THROW(logmel(tone(440), 0), std::invalid_argument); }

TEST(LogMelTest, PureToneLandsInNearestFilter) {
  // Independent Slaney-scale construction of the filter peaks.
  auto to_mel = [](double f) { return f < 1000 ? 3 * f / 200 : 15 + 27 * std::log(f / 1000) / std::log(6.4); };
  auto to_hz = [](double m) { return m < 15 ? 200 * m / 3 : 1000 * std::exp((m - 15) * std::log(6.4) / 27); };
  for (std::size_t n_mels : {64u, 128u}) {
    std::size_t nearest = 0;
    double best = 1e9;
    for (std::size_t m = 0; m < n_mels; ++m) {
      double c = to_hz(to_mel(8000.0) * static_cast<double>(m + 1) / static_cast<double>(n_mels + 1));
      if (std::abs(c - 1000.0) < best) {
        best = std::abs(c - 1000.0);
        nearest = m;
      }
    }
    LogMel f = logmel(tone(1000), n_mels);
    for (std::size_t t = 0; t < f.n_frames(); ++t) {
      std::size_t arg = 0;
      for (std::size_t m = 1; m < n_mels; ++m)
        if (f.frames[t * n_mels + m] > f.frames[t * n_mels + arg]) arg = m;
      // Frames whose window reaches into the reflected padding see a phase
      // kink; at 64 mels 1 kHz sits almost midway between two filters.
      bool interior = t * kHopSize >= kFftSize / 2 && t * kHopSize + kFftSize / 2 <= kClipSamples;
      if (interior) {
        ASSERT_EQ(arg, nearest) << "frame " << t << " n_mels " << n_mels;
      } else {
        ASSERT_LE(std::max(arg, nearest) - std::min(arg, nearest), 1u) << "frame " << t << " n_mels " << n_mels;
      }
    }
  }
}

TEST(LogMelTest, ScalingNeverDecreasesEnergy) {
  Waveform a = tone(700, 0.1);
  for (std::size_t i = 0; i < a.samples.size(); i += 3) a.samples[i] += 0.05;
  Waveform b = a;
  for (auto& s : b.samples) s *= 1.7;
  LogMel fa = logmel(a, 64), fb = logmel(b, 64);
  for (std::size_t i = 0; i < fa.frames.size(); ++i) ASSERT_GE(fb.frames[i], fa.frames[i]);
}

TEST(LogMelTest, Deterministic) {
  Waveform a = tone(1234, 0.3);
  EXPECT_EQ(logmel(a, 128).frames.storage(), logmel(a, 128).frames.storage());
}

TEST(LogMelTest, FilterColumnSumsWithinPassband) {
  for (std::size_t n_mels : {64u, 128u}) {
    Tensor fb = mel_filterbank(n_mels);
    const std::size_t bins = fb.dim(1);
    for (std::size_t k = 1; k + 1 < bins; ++k) {  // skip 0 Hz and Nyquist edges
      double s = 0.0;
      for (std::size_t m = 0; m < n_mels; ++m) s += fb[m * bins + k];
      ASSERT_GT(s, 0.0) << k;
      ASSERT_LE(s, 1.0001) << k;
    }
  }
}

TEST(LogMelTest, CacheRoundTrip) {
  LogMel f = logmel(tone(300), 64);
  save_logmel(tmp("f.feat"), f);
  LogMel g = load_logmel(tmp("f.feat"));
  ASSERT_EQ(g.frames.shape(), f.frames.shape());
  for (std::size_t i = 0; i < f.frames.size(); ++i) ASSERT_NEAR(g.frames[i], f.frames[i], 1e-5 * std::abs(f.frames[i]) + 1e-6);
}

}  // namespace
}  // namespace tsed::audio
