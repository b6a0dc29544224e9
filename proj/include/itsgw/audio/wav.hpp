#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "itsgw/core/types.hpp"

namespace itsgw::audio {

namespace detail {

inline std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

inline std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace detail

/// Parses a canonical RIFF/WAVE PCM16 mono 16 kHz file. Unknown chunks are
/// skipped; the first `fmt ` and `data` chunks are used.
inline AudioClip load_wav(std::span<const std::uint8_t> bytes) {
  using detail::read_u16;
  using detail::read_u32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail(errc::malformed_header, "missing RIFF/WAVE signature");

  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t chunk_len = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
      if (chunk_len < 16 || body + 16 > bytes.size()) fail(errc::malformed_header, "truncated fmt chunk");
      const std::uint16_t format = read_u16(bytes, body);
      const std::uint16_t channels = read_u16(bytes, body + 2);
      const std::uint32_t rate = read_u32(bytes, body + 4);
      const std::uint16_t bits = read_u16(bytes, body + 14);
      if (format != 1) fail(errc::malformed_header, "PCM format code 1 required, got " + std::to_string(format));
      if (channels != 1) fail(errc::unsupported_channels, "mono required, got " + std::to_string(channels) + " channels");
      if (rate != kAudioSampleRate) fail(errc::unsupported_rate, "16000 Hz required, got " + std::to_string(rate));
      if (bits != 16) fail(errc::unsupported_bit_depth, "16-bit samples required, got " + std::to_string(bits));
      have_fmt = true;
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      if (!have_fmt) fail(errc::malformed_header, "data chunk before fmt chunk");
      if (body + chunk_len > bytes.size()) fail(errc::malformed_header, "data chunk runs past end of file");
      AudioClip clip;
      clip.sample_rate_hz = kAudioSampleRate;
      clip.samples.resize(chunk_len / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i)
        clip.samples[i] = static_cast<std::int16_t>(read_u16(bytes, body + 2 * i));
      if (clip.samples.empty()) fail(errc::malformed_header, "empty data chunk");
      return clip;
    }
    pos = body + chunk_len + (chunk_len & 1u);
  }
  fail(errc::malformed_header, have_fmt ? "no data chunk" : "no fmt chunk");
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_error, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline AudioClip load_wav_file(const std::string& path) { return load_wav(read_file_bytes(path)); }

/// Canonical 44-byte-header PCM16 mono encoding.
inline std::vector<std::uint8_t> encode_wav(std::span<const std::int16_t> samples, std::uint32_t rate = kAudioSampleRate,
                                            std::uint16_t channels = 1) {
  std::vector<std::uint8_t> out;
  const auto data_len = static_cast<std::uint32_t>(samples.size() * 2);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_u32(out, 16);
  detail::put_u16(out, 1);
  detail::put_u16(out, channels);
  detail::put_u32(out, rate);
  detail::put_u32(out, rate * channels * 2);
  detail::put_u16(out, static_cast<std::uint16_t>(channels * 2));
  detail::put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put_u32(out, data_len);
  for (auto s : samples) detail::put_u16(out, static_cast<std::uint16_t>(s));
  return out;
}

}  // namespace itsgw::audio
