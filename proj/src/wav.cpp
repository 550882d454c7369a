// Copyright 2026 The avsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsep/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace avsep {

namespace {

constexpr double kSampleRate = 16000.0;

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return uint16_t(b[0]) | uint16_t(b[1]) << 8;
}

void write_u32(std::ostream& out, uint32_t v) {
  char b[4] = {char(v & 0xff), char(v >> 8 & 0xff), char(v >> 16 & 0xff), char(v >> 24 & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  char b[2] = {char(v & 0xff), char(v >> 8 & 0xff)};
  out.write(b, 2);
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open file");

  char tag[5] = {0};
  in.read(tag, 4);
  if (std::strncmp(tag, "RIFF", 4) != 0) fail(path, "chunk id is not RIFF");
  read_u32(in);  // riff size
  in.read(tag, 4);
  if (std::strncmp(tag, "WAVE", 4) != 0) fail(path, "format id is not WAVE");

  bool have_fmt = false;
  uint16_t audio_format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<int16_t> pcm;

  while (in.read(tag, 4)) {
    const uint32_t size = read_u32(in);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      if (size < 16) fail(path, "fmt chunk too small");
      audio_format = read_u16(in);
      channels = read_u16(in);
      rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      in.ignore(size - 16 + (size & 1));
      have_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      if (!have_fmt) fail(path, "data chunk precedes fmt chunk");
      pcm.resize(size / 2);
      in.read(reinterpret_cast<char*>(pcm.data()), size / 2 * 2);
      if (!in) fail(path, "truncated data chunk");
      if (size & 1) in.ignore(1);
    } else {
      in.ignore(size + (size & 1));
    }
  }
  if (!have_fmt) fail(path, "missing fmt chunk");
  if (audio_format != 1)
    fail(path, "audio_format is " + std::to_string(audio_format) + " (want PCM = 1)");
  if (channels != 1) fail(path, "channels is " + std::to_string(channels) + " (want mono = 1)");
  if (bits != 16) fail(path, "bits_per_sample is " + std::to_string(bits) + " (want 16)");
  if (rate != uint32_t(kSampleRate))
    fail(path, "sample_rate is " + std::to_string(rate) + " (want 16000)");

  Waveform w;
  w.sample_rate = kSampleRate;
  w.samples.resize(pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i) w.samples[i] = pcm[i] / 32768.0;
  return w;
}

void write_wav(const std::string& path, const Waveform& w) {
  if (w.sample_rate != kSampleRate)
    fail(path, "sample_rate is " + std::to_string(int(w.sample_rate)) + " (want 16000)");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open file for writing");

  const uint32_t n = uint32_t(w.samples.size());
  out.write("RIFF", 4);
  write_u32(out, 36 + 2 * n);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, uint32_t(kSampleRate));
  write_u32(out, uint32_t(kSampleRate) * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, 2 * n);
  for (double x : w.samples) {
    const double c = std::clamp(x, -1.0, 1.0);
    const int16_t q = int16_t(std::lrint(c * 32767.0));
    write_u16(out, uint16_t(q));
  }
  if (!out) fail(path, "write failed");
}

}  // namespace avsep
