#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "onsetsurv/tensor.hpp"
#include "onsetsurv/wav.hpp"

namespace onsetsurv::dsp {

using nn::Tensor;

struct FeatureConfig {
  double sample_rate = 44100.0;
  std::array<double, 3> windows = {0.023, 0.046, 0.093};  // seconds
  double hop = 0.010;                                     // seconds
  std::size_t n_mels = 80;
  double fmin = 27.5;
  double fmax = 16000.0;

  std::size_t hop_samples() const;
  std::size_t window_samples(std::size_t channel) const;
};

inline constexpr std::size_t kMelBands = 80;
inline constexpr std::size_t kChannels = 3;
inline constexpr std::size_t kChunkFrames = 15;
inline constexpr std::size_t kChunkCenter = 7;

/// Smallest power of two >= n.
std::size_t next_pow2(std::size_t n);

/// Hann-windowed magnitude STFT. Frames are centred on t * hop by reflection padding of
/// fft_size / 2 on both sides. fft_size 0 selects next_pow2(window_samples).
/// Result is [frames, fft_size/2 + 1] with frames = len / hop + 1.
Tensor stft_magnitude(const AudioClip& clip, std::size_t window_samples, std::size_t hop_samples,
                      std::size_t fft_size = 0);

/// Slaney-scale triangular filters with area normalisation, shaped [n_mels, fft_size/2 + 1].
Tensor mel_filterbank(double sample_rate, std::size_t fft_size, std::size_t n_mels, double fmin, double fmax);

/// [frames, bins] magnitudes -> [frames, n_mels] mel energies.
Tensor mel_project(const Tensor& magnitudes, double sample_rate, std::size_t n_mels, double fmin, double fmax);

/// ln(1 + x), elementwise.
Tensor log_compress(const Tensor& mel);

/// One channel of the feature stack: [frames, n_mels] log-mel for a window length in seconds.
Tensor log_mel(const AudioClip& clip, double window_seconds, const FeatureConfig& cfg = {});

/// frames x 80 mel bands x 3 window sizes, 10 ms hop.
struct FeatureTensor {
  Tensor values;  // [frames, 80, 3]
  double hop = 0.010;

  std::size_t frames() const { return values.dim(0); }
};

FeatureTensor build_features(const AudioClip& clip, const FeatureConfig& cfg = {});

struct Chunk {
  Tensor values;  // [15, 80, 3]
  std::size_t center_frame = 0;
};

/// Rows t-7 .. t+7, zero outside the clip.
Chunk extract_chunk(const FeatureTensor& feat, std::size_t t);

/// Same as extract_chunk but writes the 15*80*3 values straight into dst.
void copy_chunk(const FeatureTensor& feat, std::size_t t, std::span<double> dst);

// Feature cache: "ONSVFEAT", u32 version, u64 header length, JSON header
// {"shape", "hop", "source_hash", "dtype": "f64le"}, then the raw little-endian array.
void save_feature_cache(const std::filesystem::path& path, const FeatureTensor& feat, std::uint64_t source_hash);

struct CachedFeatures {
  FeatureTensor features;
  std::uint64_t source_hash = 0;
};
CachedFeatures load_feature_cache(const std::filesystem::path& path);

}  // namespace onsetsurv::dsp
