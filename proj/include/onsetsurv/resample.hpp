#pragma once

#include <span>
#include <vector>

#include "onsetsurv/wav.hpp"

namespace onsetsurv::dsp {

/// Rational-ratio polyphase resampler with a zero-delay, linear-phase Kaiser-windowed
/// sinc lowpass. Both rates must be integers. Output length is ceil(n * to / from).
std::vector<double> resample(std::span<const double> input, long from_rate, long to_rate,
                             int zero_crossings = 16, double kaiser_beta = 8.6);

/// Returns the clip unchanged if it already runs at target_rate.
AudioClip resample_to(const AudioClip& clip, double target_rate);

}  // namespace onsetsurv::dsp
