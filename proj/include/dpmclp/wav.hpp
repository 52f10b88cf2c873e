#pragma once

// Minimal RIFF/WAVE reader and writer: PCM16 and IEEE float32, any channel count.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "dpmclp/signal.hpp"

namespace dpmclp {

enum class WavEncoding { pcm16, float32 };

namespace detail {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

template <typename T>
void put_le(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get_le(const std::vector<char>& buf, std::size_t off) {
  if (off + sizeof(T) > buf.size()) throw Error("wav: truncated header");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  return v;
}

}  // namespace detail

inline void write_wav(const std::filesystem::path& path, const TimeSignal& x,
                      WavEncoding enc = WavEncoding::float32) {
  x.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("wav: cannot open '" + path.string() + "' for writing");

  const auto channels = static_cast<std::uint16_t>(x.channels());
  const auto frames = static_cast<std::uint32_t>(x.length());
  const std::uint16_t bits = enc == WavEncoding::pcm16 ? 16 : 32;
  const std::uint16_t format = enc == WavEncoding::pcm16 ? 1 : 3;
  const std::uint32_t block_align = channels * (bits / 8u);
  const std::uint32_t data_bytes = frames * block_align;
  const auto rate = static_cast<std::uint32_t>(std::lround(x.sample_rate));

  os.write("RIFF", 4);
  detail::put_le<std::uint32_t>(os, 36u + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  detail::put_le<std::uint32_t>(os, 16u);
  detail::put_le<std::uint16_t>(os, format);
  detail::put_le<std::uint16_t>(os, channels);
  detail::put_le<std::uint32_t>(os, rate);
  detail::put_le<std::uint32_t>(os, rate * block_align);
  detail::put_le<std::uint16_t>(os, static_cast<std::uint16_t>(block_align));
  detail::put_le<std::uint16_t>(os, bits);
  os.write("data", 4);
  detail::put_le<std::uint32_t>(os, data_bytes);

  for (Eigen::Index t = 0; t < x.length(); ++t) {
    for (Eigen::Index m = 0; m < x.channels(); ++m) {
      const double v = x.samples(m, t);
      if (enc == WavEncoding::float32) {
        detail::put_le<float>(os, static_cast<float>(v));
      } else {
        const double scaled = std::round(std::clamp(v, -1.0, 1.0) * 32768.0);
        detail::put_le<std::int16_t>(os, static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0)));
      }
    }
  }
  if (!os) throw Error("wav: write failed for '" + path.string() + "'");
}

inline TimeSignal read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("wav: cannot open '" + path.string() + "'");
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw Error("wav: '" + path.string() + "' is not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t data_off = 0, data_len = 0;
  bool have_data = false;

  std::size_t off = 12;
  while (off + 8 <= buf.size()) {
    const std::string id(buf.data() + off, 4);
    const auto len = detail::get_le<std::uint32_t>(buf, off + 4);
    const std::size_t body = off + 8;
    if (id == "fmt ") {
      if (len < 16) throw Error("wav: malformed fmt chunk");
      format = detail::get_le<std::uint16_t>(buf, body);
      channels = detail::get_le<std::uint16_t>(buf, body + 2);
      rate = detail::get_le<std::uint32_t>(buf, body + 4);
      bits = detail::get_le<std::uint16_t>(buf, body + 14);
      // WAVE_FORMAT_EXTENSIBLE: the real format tag is the first two bytes of the sub-format GUID.
      if (format == 0xFFFE) {
        if (len < 40) throw Error("wav: malformed extensible fmt chunk");
        format = detail::get_le<std::uint16_t>(buf, body + 24);
      }
      have_fmt = true;
    } else if (id == "data") {
      data_off = body;
      data_len = std::min<std::size_t>(len, buf.size() - body);
      have_data = true;
    }
    off = body + len + (len & 1u);
  }
  if (!have_fmt || !have_data) throw Error("wav: missing fmt or data chunk");
  if (channels == 0 || rate == 0) throw Error("wav: malformed header (zero channels or rate)");

  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32)
    throw Error("wav: unsupported encoding (format " + std::to_string(format) + ", " + std::to_string(bits) +
                " bits); only PCM16 and float32 are supported");

  const std::size_t width = bits / 8u;
  const std::size_t frames = data_len / (width * channels);
  Eigen::MatrixXd s(channels, static_cast<Eigen::Index>(frames));
  std::size_t p = data_off;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::uint16_t m = 0; m < channels; ++m) {
      double v;
      if (pcm16) {
        v = static_cast<double>(detail::get_le<std::int16_t>(buf, p)) / 32768.0;
      } else {
        v = static_cast<double>(detail::get_le<float>(buf, p));
      }
      s(m, static_cast<Eigen::Index>(t)) = v;
      p += width;
    }
  }
  return TimeSignal(std::move(s), static_cast<double>(rate));
}

}  // namespace dpmclp
