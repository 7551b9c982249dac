#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "relcue/error.hpp"
#include "relcue/wave.hpp"

namespace relcue {

// 16-bit PCM mono RIFF/WAVE at 16 kHz. Anything else is rejected with a
// diagnostic naming the offending property.

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace detail

inline WaveBuffer decode_wav(const std::vector<unsigned char>& bytes,
                             const std::string& name = "<memory>") {
  auto fail = [&](const std::string& why) {
    throw Error("wav " + name + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail("not a RIFF/WAVE file");

  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t size = detail::read_u32le(hdr + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) fail("truncated chunk");
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) fail("fmt chunk too short");
      const unsigned char* f = bytes.data() + body;
      const auto format = detail::read_u16le(f);
      const auto channels = detail::read_u16le(f + 2);
      const auto rate = detail::read_u32le(f + 4);
      const auto bits = detail::read_u16le(f + 14);
      if (format != 1) fail("audio format " + std::to_string(format) + " is not PCM");
      if (channels != 1)
        fail("channels=" + std::to_string(channels) + ", expected mono");
      if (rate != static_cast<std::uint32_t>(kSampleRate))
        fail("sample rate " + std::to_string(rate) + " Hz, expected 16000 Hz");
      if (bits != 16)
        fail("bits per sample " + std::to_string(bits) + ", expected 16");
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) fail("data chunk before fmt chunk");
      std::vector<double> samples(size / 2);
      const unsigned char* d = bytes.data() + body;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(detail::read_u16le(d + 2 * i));
        samples[i] = static_cast<double>(v) / 32768.0;
      }
      return WaveBuffer(std::move(samples), kSampleRate);
    }
    pos = body + size + (size & 1u);
  }
  fail("no data chunk");
  return {};
}

inline WaveBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open wav file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_wav(bytes, path.string());
}

inline std::string encode_wav(const WaveBuffer& w) {
  require(w.sample_rate() == kSampleRate, "encode_wav: sample rate must be 16 kHz");
  const auto n = static_cast<std::uint32_t>(w.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  detail::put_u32le(out, 36 + 2 * n);
  out += "WAVEfmt ";
  detail::put_u32le(out, 16);
  detail::put_u16le(out, 1);
  detail::put_u16le(out, 1);
  detail::put_u32le(out, kSampleRate);
  detail::put_u32le(out, kSampleRate * 2);
  detail::put_u16le(out, 2);
  detail::put_u16le(out, 16);
  out += "data";
  detail::put_u32le(out, 2 * n);
  for (double x : w.samples()) {
    const long q = std::lround(std::clamp(x, -1.0, 1.0) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L));
    detail::put_u16le(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, const WaveBuffer& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write wav file " + path.string());
  const std::string bytes = encode_wav(w);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace relcue
