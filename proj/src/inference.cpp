#include "onsetsurv/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace onsetsurv::infer {

double combine(double p1, double p2) { return 1.0 - (1.0 - p1) * (1.0 - p2); }

double odf(dist::Family f, const dist::DistParams& tte, const dist::DistParams& tse, int horizon) {
  if (horizon < 0) throw std::invalid_argument("odf: horizon must be non-negative");
  const double x = horizon + 1.0;
  return combine(dist::cdf(f, tte, x), dist::cdf(f, tse, x));
}

ODFSeries compute_odf(const model::ModelWeights& w, const dsp::FeatureTensor& feat, int horizon,
                      std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("compute_odf: batch size must be positive");
  constexpr std::size_t kChunkValues = dsp::kChunkFrames * dsp::kMelBands * dsp::kChannels;
  ODFSeries out;
  out.hop = feat.hop;
  out.values.reserve(feat.frames());
  for (std::size_t start = 0; start < feat.frames(); start += batch_size) {
    const std::size_t n = std::min(batch_size, feat.frames() - start);
    nn::Tensor chunks({n, dsp::kChunkFrames, dsp::kMelBands, dsp::kChannels});
    for (std::size_t i = 0; i < n; ++i)
      dsp::copy_chunk(feat, start + i, std::span<double>(chunks.raw() + i * kChunkValues, kChunkValues));
    if (w.config.variant == model::Variant::proposed) {
      for (const auto& p : model::predict_params(w, chunks, batch_size))
        out.values.push_back(odf(w.config.family, p.tte, p.tse, horizon));
    } else {
      for (double s : model::predict_scores(w, chunks, batch_size)) out.values.push_back(s);
    }
  }
  return out;
}

const std::vector<double>& hamming5() {
  static const std::vector<double> kernel = [] {
    std::vector<double> k(5);
    double sum = 0.0;
    for (int i = 0; i < 5; ++i) {
      k[static_cast<std::size_t>(i)] = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / 4.0);
      sum += k[static_cast<std::size_t>(i)];
    }
    for (auto& v : k) v /= sum;
    return k;
  }();
  return kernel;
}

ODFSeries smooth(const ODFSeries& odf) {
  const auto& k = hamming5();
  const long n = static_cast<long>(odf.values.size());
  ODFSeries out;
  out.hop = odf.hop;
  out.values.resize(odf.values.size());
  for (long t = 0; t < n; ++t) {
    double acc = 0.0, mass = 0.0;
    for (long j = -2; j <= 2; ++j) {
      const long s = t + j;
      if (s < 0 || s >= n) continue;
      acc += k[static_cast<std::size_t>(j + 2)] * odf.values[static_cast<std::size_t>(s)];
      mass += k[static_cast<std::size_t>(j + 2)];
    }
    out.values[static_cast<std::size_t>(t)] = acc / mass;
  }
  return out;
}

namespace {
std::size_t frames_of(double t, double hop) { return static_cast<std::size_t>(std::lround(t / hop)); }
}  // namespace

void PeakPickConfig::validate() const {
  for (double t : {t1, t2, t3, t4, t5})
    if (!(t >= 0.0 && std::isfinite(t))) throw std::invalid_argument("peak picking: window extents must be >= 0");
  if (!(hop > 0.0 && std::isfinite(hop))) throw std::invalid_argument("peak picking: hop must be positive");
  if (!std::isfinite(delta)) throw std::invalid_argument("peak picking: delta must be finite");
}

std::size_t PeakPickConfig::w1() const { return frames_of(t1, hop); }
std::size_t PeakPickConfig::w2() const { return frames_of(t2, hop); }
std::size_t PeakPickConfig::w3() const { return frames_of(t3, hop); }
std::size_t PeakPickConfig::w4() const { return frames_of(t4, hop); }
std::size_t PeakPickConfig::w5() const { return frames_of(t5, hop); }

std::vector<std::size_t> pick_peak_frames(const std::vector<double>& odf, const PeakPickConfig& cfg) {
  cfg.validate();
  const std::size_t n = odf.size();
  const std::size_t w1 = cfg.w1(), w2 = cfg.w2(), w3 = cfg.w3(), w4 = cfg.w4(), w5 = cfg.w5();
  std::vector<std::size_t> picks;
  for (std::size_t t = 0; t < n; ++t) {
    const double v = odf[t];
    if (t > 0 && odf[t - 1] == v) continue;  // only the first frame of a plateau
    const std::size_t a_lo = t >= w1 ? t - w1 : 0, a_hi = std::min(n - 1, t + w2);
    bool is_max = true;
    for (std::size_t s = a_lo; s <= a_hi && is_max; ++s) is_max = odf[s] <= v;
    if (!is_max) continue;
    const std::size_t b_lo = t >= w3 ? t - w3 : 0, b_hi = std::min(n - 1, t + w4);
    double sum = 0.0;
    for (std::size_t s = b_lo; s <= b_hi; ++s) sum += odf[s];
    if (!(v >= sum / static_cast<double>(b_hi - b_lo + 1) + cfg.delta)) continue;
    if (!picks.empty() && t - picks.back() <= w5) continue;
    picks.push_back(t);
  }
  return picks;
}

std::vector<double> pick_peaks(const ODFSeries& odf, const PeakPickConfig& cfg) {
  PeakPickConfig c = cfg;
  c.hop = odf.hop;
  std::vector<double> times;
  for (auto t : pick_peak_frames(odf.values, c)) times.push_back(static_cast<double>(t) * odf.hop);
  return times;
}

}  // namespace onsetsurv::infer
