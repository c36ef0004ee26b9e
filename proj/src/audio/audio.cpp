// SPDX-License-Identifier: Apache-2.0
#include "tsed/audio/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tsed::audio {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
void put16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;
constexpr int kHalfTaps = 32;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

PcmData read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open audio file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw std::runtime_error("not a RIFF/WAVE container" + where);
  }
  PcmData pcm;
  std::uint16_t format = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::size_t len = le32(chunk + 4);
    std::size_t body = pos + 8;
    std::size_t avail = std::min(len, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw std::runtime_error("fmt chunk too short" + where);
      format = le16(chunk + 8);
      pcm.channels = le16(chunk + 10);
      pcm.rate = static_cast<int>(le32(chunk + 12));
      pcm.bits = le16(chunk + 22);
      if (format == kFormatExtensible && avail >= 26) format = le16(chunk + 8 + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }
  if (format == 0) throw std::runtime_error("missing fmt chunk" + where);
  if (format != kFormatPcm) {
    throw std::runtime_error("unsupported audio format tag " + std::to_string(format) +
                             " (only uncompressed integer PCM is read)" + where);
  }
  if (pcm.bits != 8 && pcm.bits != 16 && pcm.bits != 24 && pcm.bits != 32) {
    throw std::runtime_error("unsupported bits per sample " + std::to_string(pcm.bits) + where);
  }
  if (pcm.channels < 1 || pcm.channels > 2) {
    throw std::runtime_error("unsupported channel count " + std::to_string(pcm.channels) + where);
  }
  if (pcm.rate <= 0) throw std::runtime_error("invalid sample rate " + std::to_string(pcm.rate) + where);
  if (!data) throw std::runtime_error("missing data chunk" + where);

  const std::size_t width = static_cast<std::size_t>(pcm.bits / 8);
  const std::size_t count = data_len / width;
  pcm.interleaved.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* p = data + i * width;
    double v = 0.0;
    switch (pcm.bits) {
      case 8:
        v = (static_cast<int>(p[0]) - 128) / 128.0;
        break;
      case 16:
        v = static_cast<std::int16_t>(le16(p)) / 32768.0;
        break;
      case 24: {
        std::int32_t s = static_cast<std::int32_t>((p[0] << 8) | (p[1] << 16) | (static_cast<std::uint32_t>(p[2]) << 24));
        v = (s >> 8) / 8388608.0;
        break;
      }
      case 32:
        v = static_cast<std::int32_t>(le32(p)) / 2147483648.0;
        break;
    }
    pcm.interleaved[i] = v;
  }
  pcm.interleaved.resize(count - count % static_cast<std::size_t>(pcm.channels));
  return pcm;
}

void write_wav(const std::filesystem::path& path, const std::vector<double>& samples, int rate) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const auto data_len = static_cast<std::uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  put32(os, 36 + data_len);
  os.write("WAVEfmt ", 8);
  put32(os, 16);
  put16(os, kFormatPcm);
  put16(os, 1);
  put32(os, static_cast<std::uint32_t>(rate));
  put32(os, static_cast<std::uint32_t>(rate) * 2);
  put16(os, 2);
  put16(os, 16);
  os.write("data", 4);
  put32(os, data_len);
  for (double s : samples) {
    long q = std::clamp(std::lround(s * 32768.0), -32768L, 32767L);
    put16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

std::vector<double> resample(const std::vector<double>& x, int in_rate, int out_rate) {
  if (in_rate <= 0 || out_rate <= 0) throw std::invalid_argument("resample: rates must be positive");
  if (in_rate == out_rate || x.empty()) return x;
  const long g = std::gcd(in_rate, out_rate);
  const long up = out_rate / g;
  const long down = in_rate / g;
  const double cutoff = std::min(1.0, static_cast<double>(up) / static_cast<double>(down));

  // taps[p][k] weights input sample (i0 - kHalfTaps + 1 + k) for phase p
  std::vector<std::vector<double>> taps(static_cast<std::size_t>(up), std::vector<double>(2 * kHalfTaps));
  for (long p = 0; p < up; ++p) {
    double frac = static_cast<double>(p) / static_cast<double>(up);
    double total = 0.0;
    for (int k = 0; k < 2 * kHalfTaps; ++k) {
      double d = static_cast<double>(k - kHalfTaps + 1) - frac;
      double win = 0.5 + 0.5 * std::cos(std::numbers::pi * d / kHalfTaps);
      double h = cutoff * sinc(cutoff * d) * win;
      taps[static_cast<std::size_t>(p)][static_cast<std::size_t>(k)] = h;
      total += h;
    }
    for (auto& h : taps[static_cast<std::size_t>(p)]) h /= total;
  }

  const long n_in = static_cast<long>(x.size());
  const long n_out = (n_in * up + down - 1) / down;
  std::vector<double> y(static_cast<std::size_t>(n_out));
  for (long n = 0; n < n_out; ++n) {
    long num = n * down;
    long i0 = num / up;
    const auto& h = taps[static_cast<std::size_t>(num % up)];
    double acc = 0.0;
    for (int k = 0; k < 2 * kHalfTaps; ++k) {
      long i = std::clamp(i0 - kHalfTaps + 1 + k, 0L, n_in - 1);
      acc += h[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(i)];
    }
    y[static_cast<std::size_t>(n)] = acc;
  }
  return y;
}

Waveform to_clip(const PcmData& pcm) {
  if (pcm.channels < 1) throw std::invalid_argument("to_clip: no channels");
  const std::size_t frames = pcm.interleaved.size() / static_cast<std::size_t>(pcm.channels);
  std::vector<double> mono(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double s = 0.0;
    for (int c = 0; c < pcm.channels; ++c) s += pcm.interleaved[i * static_cast<std::size_t>(pcm.channels) + static_cast<std::size_t>(c)];
    mono[i] = s / pcm.channels;
  }
  Waveform w;
  w.samples = resample(mono, pcm.rate, kSampleRate);
  w.samples.resize(kClipSamples, 0.0);
  return w;
}

Waveform load_audio(const std::filesystem::path& path) { return to_clip(read_wav(path)); }

}  // namespace tsed::audio
