#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace onsetsurv::dsp {

/// Mono audio, amplitudes nominally in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  double sample_rate = 44100.0;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

enum class WavFormat { pcm16, pcm24, float32 };

/// Reads 16/24/32-bit integer PCM and 32/64-bit float WAV (including WAVE_FORMAT_EXTENSIBLE).
/// Multichannel files are mixed down by averaging channels.
AudioClip decode_wav(const std::string& bytes);
AudioClip read_wav(const std::filesystem::path& path);

std::string encode_wav(const AudioClip& clip, WavFormat format = WavFormat::float32);
void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavFormat format = WavFormat::float32);

}  // namespace onsetsurv::dsp
