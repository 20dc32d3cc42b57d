#include "onsetsurv/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "onsetsurv/random.hpp"

namespace onsetsurv::synth {

EventKind event_kind_from_string(std::string_view name) {
  if (name == "click") return EventKind::click;
  if (name == "tone") return EventKind::tone;
  if (name == "noise") return EventKind::noise;
  if (name == "mixed") return EventKind::mixed;
  throw std::invalid_argument("unknown event kind '" + std::string(name) + "' (click, tone, noise, mixed)");
}

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::click:
      return "click";
    case EventKind::tone:
      return "tone";
    case EventKind::noise:
      return "noise";
    case EventKind::mixed:
      return "mixed";
  }
  return "?";
}

namespace {

std::size_t total_samples(const SynthSpec& s) {
  return static_cast<std::size_t>(std::llround(s.duration * s.sample_rate));
}

std::size_t gap_samples(const SynthSpec& s) {
  return static_cast<std::size_t>(std::ceil(s.min_gap * s.sample_rate - 1e-9));
}

// Adds one event starting at sample `at`; returns the number of samples it covers.
std::size_t render(std::vector<double>& out, std::size_t at, EventKind kind, double amplitude, double sr, Rng& rng) {
  const auto length = [&](double seconds) {
    return std::min(out.size() - at, static_cast<std::size_t>(std::llround(seconds * sr)));
  };
  switch (kind) {
    case EventKind::click: {
      const std::size_t n = length(0.005);
      out[at] += amplitude;
      for (std::size_t i = 1; i < n; ++i)
        out[at + i] += amplitude * 0.6 * std::exp(-static_cast<double>(i) / (0.001 * sr)) * uniform(rng, -1.0, 1.0);
      return n;
    }
    case EventKind::tone: {
      const std::size_t n = length(0.100);
      const double freq = 110.0 * std::pow(2.0, uniform(rng, 0.0, 4.0));
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        out[at + i] += amplitude * std::exp(-t / 0.025) * std::sin(2.0 * M_PI * freq * t + M_PI / 2);
      }
      return n;
    }
    case EventKind::noise: {
      const std::size_t n = length(0.030);
      for (std::size_t i = 0; i < n; ++i)
        out[at + i] += amplitude * std::exp(-static_cast<double>(i) / (0.008 * sr)) * uniform(rng, -1.0, 1.0);
      return n;
    }
    case EventKind::mixed:
      break;
  }
  throw std::logic_error("render: mixed is resolved per event");
}

}  // namespace

void SynthSpec::validate() const {
  if (!(duration > 0.0 && std::isfinite(duration))) throw std::invalid_argument("synth: duration must be positive");
  if (!(density >= 0.0 && std::isfinite(density))) throw std::invalid_argument("synth: density must be >= 0");
  if (!(min_gap > 0.0 && std::isfinite(min_gap))) throw std::invalid_argument("synth: min_gap must be positive");
  if (!(sample_rate > 0.0 && std::isfinite(sample_rate)))
    throw std::invalid_argument("synth: sample rate must be positive");
  if (!std::isfinite(snr_db)) throw std::invalid_argument("synth: snr_db must be finite");
  const std::size_t n = event_count();
  if (n > 1 && (n - 1) * gap_samples(*this) >= total_samples(*this))
    throw std::invalid_argument("synth: " + std::to_string(n) + " events at least " + std::to_string(min_gap) +
                                " s apart do not fit in " + std::to_string(duration) + " s (density " +
                                std::to_string(density) + "/s)");
}

std::size_t SynthSpec::event_count() const { return static_cast<std::size_t>(std::llround(density * duration)); }

SynthClip synthesize(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t n_samples = total_samples(spec);
  const std::size_t n_events = spec.event_count();
  SynthClip clip;
  clip.audio.sample_rate = spec.sample_rate;
  clip.audio.samples.assign(n_samples, 0.0);
  if (n_events == 0) return clip;

  // Uniform draws on the span left after reserving the gaps, sorted and re-expanded: the same
  // distribution as rejection sampling with a minimum spacing, without the retries.
  const std::size_t gap = gap_samples(spec);
  const std::size_t free_span = n_samples - (n_events - 1) * gap;
  std::vector<std::size_t> starts(n_events);
  for (auto& s : starts) s = uniform_index(rng, free_span);
  std::sort(starts.begin(), starts.end());
  for (std::size_t i = 0; i < n_events; ++i) starts[i] += i * gap;

  std::vector<double> events(n_samples, 0.0);
  std::vector<char> active(n_samples, 0);
  for (auto at : starts) {
    EventKind kind = spec.kind;
    if (kind == EventKind::mixed) kind = static_cast<EventKind>(uniform_index(rng, 3));
    const double amplitude = uniform(rng, 0.4, 0.8);
    const std::size_t len = render(events, at, kind, amplitude, spec.sample_rate, rng);
    std::fill(active.begin() + static_cast<long>(at), active.begin() + static_cast<long>(at + len), 1);
    clip.annotation.onsets.push_back(static_cast<double>(at) / spec.sample_rate);
  }

  double power = 0.0;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < n_samples; ++i)
    if (active[i]) {
      power += events[i] * events[i];
      ++covered;
    }
  const double noise_std = std::sqrt(power / static_cast<double>(covered) / std::pow(10.0, spec.snr_db / 10.0));
  double peak = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    clip.audio.samples[i] = events[i] + noise_std * standard_normal(rng);
    peak = std::max(peak, std::abs(clip.audio.samples[i]));
  }
  if (peak > 0.99)
    for (auto& v : clip.audio.samples) v *= 0.99 / peak;
  return clip;
}

}  // namespace onsetsurv::synth
