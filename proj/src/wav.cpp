#include "onsetsurv/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "onsetsurv/io.hpp"

namespace onsetsurv::dsp {

namespace {

std::uint16_t u16(const std::string& b, std::size_t off) {
  if (off + 2 > b.size()) throw std::runtime_error("wav: truncated file");
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[off]) |
                                    (static_cast<unsigned char>(b[off + 1]) << 8));
}

std::uint32_t u32(const std::string& b, std::size_t off) {
  if (off + 4 > b.size()) throw std::runtime_error("wav: truncated file");
  return io::read_u32_le(b, off);
}

constexpr std::uint16_t kPcm = 1;
constexpr std::uint16_t kFloat = 3;
constexpr std::uint16_t kExtensible = 0xFFFE;

double sample_at(const std::string& b, std::size_t off, std::uint16_t format, std::uint16_t bits) {
  if (format == kPcm) {
    switch (bits) {
      case 8:
        return (static_cast<unsigned char>(b[off]) - 128.0) / 128.0;
      case 16:
        return static_cast<std::int16_t>(u16(b, off)) / 32768.0;
      case 24: {
        std::int32_t v = static_cast<unsigned char>(b[off]) | (static_cast<unsigned char>(b[off + 1]) << 8) |
                         (static_cast<unsigned char>(b[off + 2]) << 16);
        if (v & 0x800000) v -= 0x1000000;
        return v / 8388608.0;
      }
      case 32:
        return static_cast<std::int32_t>(u32(b, off)) / 2147483648.0;
    }
  } else if (format == kFloat) {
    if (bits == 32) return std::bit_cast<float>(u32(b, off));
    if (bits == 64) return std::bit_cast<double>(io::read_u64_le(b, off));
  }
  throw std::runtime_error("wav: unsupported sample format " + std::to_string(format) + "/" + std::to_string(bits) +
                           " bits");
}

}  // namespace

AudioClip decode_wav(const std::string& bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0)
    throw std::runtime_error("wav: not a RIFF/WAVE file");
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_off = 0, data_len = 0;
  bool have_fmt = false, have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::size_t len = u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      format = u16(bytes, body);
      channels = u16(bytes, body + 2);
      rate = u32(bytes, body + 4);
      bits = u16(bytes, body + 14);
      if (format == kExtensible) {
        if (len < 26) throw std::runtime_error("wav: short extensible fmt chunk");
        format = u16(bytes, body + 24);
      }
      have_fmt = true;
    } else if (id == "data") {
      data_off = body;
      data_len = std::min(len, bytes.size() - body);
      have_data = true;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt || !have_data) throw std::runtime_error("wav: missing fmt or data chunk");
  if (channels == 0 || rate == 0 || bits % 8 != 0) throw std::runtime_error("wav: invalid fmt chunk");

  const std::size_t width = bits / 8;
  const std::size_t frame_bytes = width * channels;
  const std::size_t frames = data_len / frame_bytes;
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) acc += sample_at(bytes, data_off + i * frame_bytes + c * width, format, bits);
    clip.samples[i] = acc / channels;
  }
  return clip;
}

AudioClip read_wav(const std::filesystem::path& path) {
  try {
    return decode_wav(io::read_file(path));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::string encode_wav(const AudioClip& clip, WavFormat format) {
  if (clip.sample_rate <= 0 || clip.sample_rate != std::floor(clip.sample_rate))
    throw std::invalid_argument("wav: sample rate must be a positive integer");
  const std::uint16_t bits = format == WavFormat::pcm16 ? 16 : format == WavFormat::pcm24 ? 24 : 32;
  const std::uint16_t tag = format == WavFormat::float32 ? kFloat : kPcm;
  const std::uint32_t rate = static_cast<std::uint32_t>(clip.sample_rate);
  const std::uint32_t data_len = static_cast<std::uint32_t>(clip.samples.size() * (bits / 8));

  std::string out = "RIFF";
  io::append_u32_le(out, 36 + data_len);
  out += "WAVEfmt ";
  io::append_u32_le(out, 16);
  out.push_back(static_cast<char>(tag));
  out.push_back(0);
  out.push_back(1);  // mono
  out.push_back(0);
  io::append_u32_le(out, rate);
  io::append_u32_le(out, rate * (bits / 8));
  out.push_back(static_cast<char>(bits / 8));
  out.push_back(0);
  out.push_back(static_cast<char>(bits));
  out.push_back(0);
  out += "data";
  io::append_u32_le(out, data_len);
  for (double s : clip.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    if (format == WavFormat::float32) {
      io::append_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(s)));
    } else if (format == WavFormat::pcm16) {
      const auto v = static_cast<std::int16_t>(std::lround(std::clamp(c * 32768.0, -32768.0, 32767.0)));
      const auto u = static_cast<std::uint16_t>(v);
      out.push_back(static_cast<char>(u & 0xff));
      out.push_back(static_cast<char>(u >> 8));
    } else {
      const auto v = static_cast<std::int32_t>(std::lround(std::clamp(c * 8388608.0, -8388608.0, 8388607.0)));
      const auto u = static_cast<std::uint32_t>(v);
      for (int k = 0; k < 3; ++k) out.push_back(static_cast<char>((u >> (8 * k)) & 0xff));
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavFormat format) {
  io::atomic_write(path, encode_wav(clip, format));
}

}  // namespace onsetsurv::dsp
