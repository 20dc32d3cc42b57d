#include "onsetsurv/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "onsetsurv/io.hpp"

namespace onsetsurv::dsp {

std::size_t FeatureConfig::hop_samples() const { return static_cast<std::size_t>(std::lround(sample_rate * hop)); }

std::size_t FeatureConfig::window_samples(std::size_t channel) const {
  return static_cast<std::size_t>(std::lround(sample_rate * windows.at(channel)));
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace {

// FFTW's planner is not thread-safe; plan creation and destruction are serialised.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    if (!in_ || !out_) throw std::bad_alloc();
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void magnitudes(double* dst) {
    fftw_execute(plan_);
    for (std::size_t k = 0; k <= n_ / 2; ++k) dst[k] = std::hypot(out_[k][0], out_[k][1]);
  }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

// numpy-style "reflect" (edge sample not repeated), folded for any offset.
std::size_t reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  if (i >= n) i = period - i;
  return static_cast<std::size_t>(i);
}

double hz_to_mel(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (hz >= min_log_hz) return min_log_mel + std::log(hz / min_log_hz) / logstep;
  return hz / f_sp;
}

double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (mel >= min_log_mel) return min_log_hz * std::exp(logstep * (mel - min_log_mel));
  return f_sp * mel;
}

}  // namespace

Tensor stft_magnitude(const AudioClip& clip, std::size_t window_samples, std::size_t hop_samples,
                      std::size_t fft_size) {
  if (clip.samples.empty()) throw std::invalid_argument("stft: empty clip");
  if (window_samples == 0 || hop_samples == 0) throw std::invalid_argument("stft: window and hop must be positive");
  if (window_samples > clip.samples.size())
    throw std::invalid_argument("stft: window of " + std::to_string(window_samples) + " samples exceeds clip length " +
                                std::to_string(clip.samples.size()));
  if (fft_size == 0) fft_size = next_pow2(window_samples);
  if (fft_size < window_samples) throw std::invalid_argument("stft: fft size smaller than window");

  const std::size_t len = clip.samples.size();
  const std::size_t frames = len / hop_samples + 1;
  const std::size_t bins = fft_size / 2 + 1;
  const std::size_t win_offset = (fft_size - window_samples) / 2;
  const long pad = static_cast<long>(fft_size / 2);

  std::vector<double> window(window_samples);
  for (std::size_t n = 0; n < window_samples; ++n)
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / window_samples);

  Tensor mag(nn::Shape{frames, bins});
  RealFft fft(fft_size);
  for (std::size_t t = 0; t < frames; ++t) {
    double* buf = fft.input();
    std::fill(buf, buf + fft_size, 0.0);
    const long start = static_cast<long>(t * hop_samples) - pad + static_cast<long>(win_offset);
    for (std::size_t n = 0; n < window_samples; ++n)
      buf[win_offset + n] = window[n] * clip.samples[reflect_index(start + static_cast<long>(n), static_cast<long>(len))];
    fft.magnitudes(mag.raw() + t * bins);
  }
  return mag;
}

Tensor mel_filterbank(double sample_rate, std::size_t fft_size, std::size_t n_mels, double fmin, double fmax) {
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0))
    throw std::invalid_argument("mel: need 0 <= fmin < fmax <= sample_rate / 2");
  if (n_mels == 0) throw std::invalid_argument("mel: n_mels must be positive");
  const std::size_t bins = fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(fmin), mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));

  Tensor fb(nn::Shape{n_mels, bins});
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    const double enorm = 2.0 / (hi - lo);
    bool any = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
      const double w = std::max(0.0, std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid)));
      fb[m * bins + k] = w * enorm;
      any = any || w > 0.0;
    }
    if (!any)
      throw std::invalid_argument("mel: " + std::to_string(n_mels) + " bands exceed the resolution of a " +
                                  std::to_string(fft_size) + "-point FFT (band " + std::to_string(m) + " is empty)");
  }
  return fb;
}

Tensor mel_project(const Tensor& magnitudes, double sample_rate, std::size_t n_mels, double fmin, double fmax) {
  if (magnitudes.rank() != 2) throw std::invalid_argument("mel: expected [frames, bins] magnitudes");
  const std::size_t frames = magnitudes.dim(0), bins = magnitudes.dim(1);
  const std::size_t fft_size = (bins - 1) * 2;
  const Tensor fb = mel_filterbank(sample_rate, fft_size, n_mels, fmin, fmax);
  // Filters are triangles; only their non-zero support is visited.
  std::vector<std::pair<std::size_t, std::size_t>> support(n_mels);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double* row = fb.raw() + m * bins;
    std::size_t lo = 0, hi = bins;
    while (lo < bins && row[lo] == 0.0) ++lo;
    while (hi > lo && row[hi - 1] == 0.0) --hi;
    support[m] = {lo, hi};
  }
  Tensor mel(nn::Shape{frames, n_mels});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t m = 0; m < n_mels; ++m) {
      double acc = 0.0;
      const double* row = fb.raw() + m * bins;
      const double* spec = magnitudes.raw() + t * bins;
      for (std::size_t k = support[m].first; k < support[m].second; ++k) acc += row[k] * spec[k];
      mel[t * n_mels + m] = acc;
    }
  return mel;
}

Tensor log_compress(const Tensor& mel) {
  Tensor out(mel.shape());
  for (std::size_t i = 0; i < mel.size(); ++i) {
    if (!(mel[i] >= 0.0)) throw std::invalid_argument("log_compress: negative or NaN input");
    out[i] = std::log1p(mel[i]);
  }
  return out;
}

Tensor log_mel(const AudioClip& clip, double window_seconds, const FeatureConfig& cfg) {
  if (clip.sample_rate != cfg.sample_rate)
    throw std::invalid_argument("features: clip is at " + std::to_string(clip.sample_rate) + " Hz, expected " +
                                std::to_string(cfg.sample_rate));
  const auto win = static_cast<std::size_t>(std::lround(cfg.sample_rate * window_seconds));
  const auto mag = stft_magnitude(clip, win, cfg.hop_samples());
  return log_compress(mel_project(mag, cfg.sample_rate, cfg.n_mels, cfg.fmin, cfg.fmax));
}

FeatureTensor build_features(const AudioClip& clip, const FeatureConfig& cfg) {
  if (cfg.n_mels != kMelBands) throw std::invalid_argument("features: the feature stack uses exactly 80 mel bands");
  std::array<Tensor, kChannels> channels;
  std::size_t frames = SIZE_MAX;
  for (std::size_t c = 0; c < kChannels; ++c) {
    channels[c] = log_mel(clip, cfg.windows[c], cfg);
    frames = std::min(frames, channels[c].dim(0));
  }
  FeatureTensor feat{Tensor(nn::Shape{frames, kMelBands, kChannels}), cfg.hop};
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t m = 0; m < kMelBands; ++m)
      for (std::size_t c = 0; c < kChannels; ++c)
        feat.values[(t * kMelBands + m) * kChannels + c] = channels[c][t * kMelBands + m];
  return feat;
}

void copy_chunk(const FeatureTensor& feat, std::size_t t, std::span<double> dst) {
  const std::size_t frames = feat.frames();
  if (t >= frames)
    throw std::out_of_range("chunk centre " + std::to_string(t) + " outside [0, " + std::to_string(frames) + ")");
  constexpr std::size_t row = kMelBands * kChannels;
  if (dst.size() != kChunkFrames * row) throw std::invalid_argument("chunk buffer must hold 15x80x3 values");
  for (std::size_t r = 0; r < kChunkFrames; ++r) {
    const long src = static_cast<long>(t + r) - static_cast<long>(kChunkCenter);
    double* out = dst.data() + r * row;
    if (src < 0 || src >= static_cast<long>(frames)) {
      std::fill(out, out + row, 0.0);
    } else {
      const double* in = feat.values.raw() + static_cast<std::size_t>(src) * row;
      std::copy(in, in + row, out);
    }
  }
}

Chunk extract_chunk(const FeatureTensor& feat, std::size_t t) {
  Chunk c{Tensor(nn::Shape{kChunkFrames, kMelBands, kChannels}), t};
  copy_chunk(feat, t, c.values.data());
  return c;
}

namespace {
constexpr std::string_view kFeatMagic = "ONSVFEAT";
constexpr std::uint32_t kFeatVersion = 1;
}  // namespace

void save_feature_cache(const std::filesystem::path& path, const FeatureTensor& feat, std::uint64_t source_hash) {
  nlohmann::json header = {{"shape", feat.values.shape()},
                           {"hop", feat.hop},
                           {"source_hash", io::hex64(source_hash)},
                           {"dtype", "f64le"}};
  const std::string text = header.dump();
  std::string out(kFeatMagic);
  io::append_u32_le(out, kFeatVersion);
  io::append_u64_le(out, text.size());
  out += text;
  io::append_f64_le(out, feat.values.data());
  io::atomic_write(path, out);
}

CachedFeatures load_feature_cache(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  if (bytes.size() < 20 || std::string_view(bytes).substr(0, 8) != kFeatMagic)
    throw std::runtime_error(path.string() + ": not a feature cache file");
  if (io::read_u32_le(bytes, 8) != kFeatVersion) throw std::runtime_error(path.string() + ": unsupported version");
  const auto len = io::read_u64_le(bytes, 12);
  if (20 + len > bytes.size()) throw std::runtime_error(path.string() + ": truncated header");
  const auto header = nlohmann::json::parse(bytes.substr(20, len));
  if (header.value("dtype", "") != "f64le") throw std::runtime_error(path.string() + ": unsupported dtype");
  CachedFeatures out;
  out.features.values = Tensor(header.at("shape").get<nn::Shape>());
  out.features.hop = header.at("hop").get<double>();
  out.source_hash = std::stoull(header.at("source_hash").get<std::string>(), nullptr, 16);
  if (20 + len + out.features.values.size() * 8 != bytes.size())
    throw std::runtime_error(path.string() + ": payload size does not match shape");
  io::read_f64_le(bytes, 20 + len, out.features.values.data());
  return out;
}

}  // namespace onsetsurv::dsp
