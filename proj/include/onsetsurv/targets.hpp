#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace onsetsurv::targets {

/// Onset times in seconds, strictly increasing.
struct OnsetAnnotation {
  std::vector<double> onsets;
};

/// Throws std::invalid_argument unless times are non-negative and strictly increasing.
void validate(const OnsetAnnotation& ann);

/// Time-to-event and time-since-event targets of one frame, in frames. u = 1 means the
/// value is exact, u = 0 means it is only a lower bound (censored).
struct TargetFrame {
  int tte_T = 0;
  int tte_u = 0;
  int tse_T = 0;
  int tse_u = 0;

  friend bool operator==(const TargetFrame&, const TargetFrame&) = default;
};

inline constexpr int kNoThreshold = std::numeric_limits<int>::max();

/// round(time / hop) with ties to even; frames >= n_frames are dropped, duplicates merged.
std::vector<std::size_t> onset_frames(const OnsetAnnotation& ann, double hop, std::size_t n_frames);

/// Per-frame targets. Targets above threshold become (threshold, censored).
std::vector<TargetFrame> compute_targets(const std::vector<std::size_t>& onset_frames, std::size_t n_frames,
                                         int threshold = kNoThreshold);

/// Frames with an exact zero time-to-event.
std::vector<std::size_t> reconstruct_onsets(const std::vector<TargetFrame>& targets);

/// One onset time per line. Blank lines and '#' comments are skipped; additional
/// whitespace-separated columns after the time are ignored. Unsorted input is sorted and
/// reported through `warning` when given.
OnsetAnnotation parse_annotation(const std::string& text, std::string* warning = nullptr);
OnsetAnnotation read_annotation(const std::filesystem::path& path, std::string* warning = nullptr);

std::string format_onsets(const std::vector<double>& times);
void write_onsets(const std::filesystem::path& path, const std::vector<double>& times);

}  // namespace onsetsurv::targets
