#include "onsetsurv/resample.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace onsetsurv::dsp {

namespace {

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

std::vector<double> resample(std::span<const double> input, long from_rate, long to_rate, int zero_crossings,
                             double kaiser_beta) {
  if (from_rate <= 0 || to_rate <= 0) throw std::invalid_argument("resample: rates must be positive");
  if (from_rate == to_rate) return {input.begin(), input.end()};
  const long g = std::gcd(from_rate, to_rate);
  const long up = to_rate / g;
  const long down = from_rate / g;

  // Lowpass designed at the upsampled rate; cutoff at the lower Nyquist.
  const double cutoff = 0.5 / static_cast<double>(std::max(up, down));
  const long half = static_cast<long>(std::ceil(zero_crossings / (2.0 * cutoff)));
  const long taps = 2 * half + 1;
  std::vector<double> h(static_cast<std::size_t>(taps));
  const double norm = bessel_i0(kaiser_beta);
  for (long n = 0; n < taps; ++n) {
    const double r = static_cast<double>(n - half) / static_cast<double>(half);
    const double w = bessel_i0(kaiser_beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / norm;
    h[static_cast<std::size_t>(n)] = static_cast<double>(up) * 2.0 * cutoff * sinc(2.0 * cutoff * (n - half)) * w;
  }

  const long n_in = static_cast<long>(input.size());
  const long n_out = (n_in * up + down - 1) / down;
  std::vector<double> out(static_cast<std::size_t>(n_out), 0.0);
  for (long m = 0; m < n_out; ++m) {
    // Upsampled position of output sample m; tap index is t - k*up + half.
    const long t = m * down;
    long k_lo = t + half - (taps - 1);
    k_lo = k_lo <= 0 ? 0 : (k_lo + up - 1) / up;
    const long k_hi = std::min(n_in - 1, (t + half) / up);
    double acc = 0.0;
    for (long k = k_lo; k <= k_hi; ++k) acc += input[static_cast<std::size_t>(k)] * h[static_cast<std::size_t>(t - k * up + half)];
    out[static_cast<std::size_t>(m)] = acc;
  }
  return out;
}

AudioClip resample_to(const AudioClip& clip, double target_rate) {
  if (clip.sample_rate == target_rate) return clip;
  if (clip.sample_rate != std::floor(clip.sample_rate) || target_rate != std::floor(target_rate))
    throw std::invalid_argument("resample: only integer sample rates are supported");
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples = resample(clip.samples, static_cast<long>(clip.sample_rate), static_cast<long>(target_rate));
  return out;
}

}  // namespace onsetsurv::dsp
