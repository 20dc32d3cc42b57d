#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "onsetsurv/targets.hpp"
#include "onsetsurv/wav.hpp"

namespace onsetsurv::synth {

enum class EventKind { click, tone, noise, mixed };

EventKind event_kind_from_string(std::string_view name);
std::string to_string(EventKind k);

struct SynthSpec {
  double duration = 30.0;  // seconds
  double density = 1.0;    // events per second
  double min_gap = 0.05;   // seconds between consecutive onsets
  EventKind kind = EventKind::click;
  double snr_db = 20.0;  // event power over background white noise
  std::uint64_t seed = 1;
  double sample_rate = 44100.0;

  /// Rejects non-positive sizes and event counts that cannot honour min_gap.
  void validate() const;
  /// round(density * duration)
  std::size_t event_count() const;
};

struct SynthClip {
  dsp::AudioClip audio;
  targets::OnsetAnnotation annotation;  // exact onset times (sample index / sample rate)
};

/// Onsets are spread uniformly subject to the minimum gap. Clicks are 5 ms decaying noise
/// bursts whose first sample carries the peak, tones are 100 ms decaying sinusoids between
/// 110 and 1760 Hz, noise events are 30 ms decaying bursts.
SynthClip synthesize(const SynthSpec& spec);

}  // namespace onsetsurv::synth
