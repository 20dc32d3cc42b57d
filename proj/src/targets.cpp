#include "onsetsurv/targets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "onsetsurv/io.hpp"

namespace onsetsurv::targets {

void validate(const OnsetAnnotation& ann) {
  for (std::size_t i = 0; i < ann.onsets.size(); ++i) {
    if (!(ann.onsets[i] >= 0.0)) throw std::invalid_argument("annotation: negative onset time");
    if (i > 0 && !(ann.onsets[i] > ann.onsets[i - 1]))
      throw std::invalid_argument("annotation: onset times must be strictly increasing");
  }
}

std::vector<std::size_t> onset_frames(const OnsetAnnotation& ann, double hop, std::size_t n_frames) {
  if (!(hop > 0.0)) throw std::invalid_argument("onset_frames: hop must be positive");
  std::vector<std::size_t> frames;
  frames.reserve(ann.onsets.size());
  for (double t : ann.onsets) {
    // nearbyint honours the default round-half-to-even mode.
    const double f = std::nearbyint(t / hop);
    if (f < 0.0 || f >= static_cast<double>(n_frames)) continue;
    frames.push_back(static_cast<std::size_t>(f));
  }
  std::sort(frames.begin(), frames.end());
  frames.erase(std::unique(frames.begin(), frames.end()), frames.end());
  return frames;
}

std::vector<TargetFrame> compute_targets(const std::vector<std::size_t>& onset_frames, std::size_t n_frames,
                                         int threshold) {
  if (threshold < 1) throw std::invalid_argument("compute_targets: threshold must be >= 1");
  std::vector<bool> is_onset(n_frames, false);
  for (auto f : onset_frames) {
    if (f >= n_frames) throw std::invalid_argument("compute_targets: onset frame outside the clip");
    is_onset[f] = true;
  }
  std::vector<TargetFrame> out(n_frames);
  const auto n = static_cast<long>(n_frames);

  long next = -1;  // nearest onset at or after t
  for (long t = n - 1; t >= 0; --t) {
    if (is_onset[static_cast<std::size_t>(t)]) next = t;
    auto& tf = out[static_cast<std::size_t>(t)];
    if (next >= 0) {
      tf.tte_T = static_cast<int>(next - t);
      tf.tte_u = 1;
    } else {
      tf.tte_T = static_cast<int>((n - 1) - t);
      tf.tte_u = 0;
    }
  }
  long prev = -1;  // nearest onset at or before t
  for (long t = 0; t < n; ++t) {
    if (is_onset[static_cast<std::size_t>(t)]) prev = t;
    auto& tf = out[static_cast<std::size_t>(t)];
    if (prev >= 0) {
      tf.tse_T = static_cast<int>(t - prev);
      tf.tse_u = 1;
    } else {
      tf.tse_T = static_cast<int>(t);
      tf.tse_u = 0;
    }
  }
  for (auto& tf : out) {
    if (tf.tte_T > threshold) tf = {threshold, 0, tf.tse_T, tf.tse_u};
    if (tf.tse_T > threshold) tf = {tf.tte_T, tf.tte_u, threshold, 0};
  }
  return out;
}

std::vector<std::size_t> reconstruct_onsets(const std::vector<TargetFrame>& targets) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < targets.size(); ++t)
    if (targets[t].tte_u == 1 && targets[t].tte_T == 0) out.push_back(t);
  return out;
}

OnsetAnnotation parse_annotation(const std::string& text, std::string* warning) {
  OnsetAnnotation ann;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string first;
    if (!(fields >> first)) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(first, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != first.size() || !std::isfinite(v))
      throw std::invalid_argument("annotation line " + std::to_string(lineno) + ": '" + first + "' is not a time");
    ann.onsets.push_back(v);
  }
  if (!std::is_sorted(ann.onsets.begin(), ann.onsets.end())) {
    std::sort(ann.onsets.begin(), ann.onsets.end());
    if (warning) *warning = "onset times were not sorted; sorted on load";
  }
  const auto dup = std::unique(ann.onsets.begin(), ann.onsets.end());
  if (dup != ann.onsets.end()) {
    ann.onsets.erase(dup, ann.onsets.end());
    if (warning) *warning += (warning->empty() ? "" : "; ") + std::string("duplicate onset times merged");
  }
  validate(ann);
  return ann;
}

OnsetAnnotation read_annotation(const std::filesystem::path& path, std::string* warning) {
  try {
    return parse_annotation(io::read_file(path), warning);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string format_onsets(const std::vector<double>& times) {
  std::string out;
  char buf[64];
  for (double t : times) {
    std::snprintf(buf, sizeof buf, "%.6f\n", t);
    out += buf;
  }
  return out;
}

void write_onsets(const std::filesystem::path& path, const std::vector<double>& times) {
  io::atomic_write(path, format_onsets(times));
}

}  // namespace onsetsurv::targets
