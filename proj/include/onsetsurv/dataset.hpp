#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "onsetsurv/synth.hpp"
#include "onsetsurv/trainer.hpp"

namespace onsetsurv::data {

struct ClipEntry {
  std::string id;
  std::filesystem::path audio;       // relative to the dataset root
  std::filesystem::path annotation;  // relative to the dataset root
  std::filesystem::path features;    // feature cache, relative to the root; empty if none

  friend bool operator==(const ClipEntry&, const ClipEntry&) = default;
};

/// Pairs of `audio/<id>.wav` and `annotations/<id>.onsets.txt` under a root directory.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ClipEntry> clips;  // sorted by id
  std::vector<std::size_t> folds;  // fold per clip, empty when unassigned

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Annotation suffixes accepted next to an audio stem, in order of preference.
inline const std::vector<std::string> kAnnotationSuffixes = {".onsets.txt", ".onsets"};

using Logger = std::function<void(const std::string&)>;

/// Scans root. Unpaired audio or annotation files are skipped and reported through `log`.
/// Throws when no pair is found.
DatasetManifest load_dataset(const std::filesystem::path& root, const Logger& log = {});

/// JSON with paths relative to the root.
std::string manifest_json(const DatasetManifest& m);
DatasetManifest parse_manifest(const std::string& json, const std::filesystem::path& root);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes n synthetic clips (float WAV + annotation) and manifest.json. Clip i uses a seed
/// derived from spec.seed and i.
DatasetManifest write_synthetic_dataset(const std::filesystem::path& root, const synth::SynthSpec& spec,
                                        std::size_t n_clips);

/// Seed of clip i in a synthetic dataset.
std::uint64_t clip_seed(std::uint64_t base, std::size_t index);

struct LoadOptions {
  int threshold = 10;
  /// Directory for feature caches; empty disables caching.
  std::filesystem::path cache_dir;
};

/// Reads, resamples to 44.1 kHz and featurises every clip, reusing caches whose source hash matches.
std::vector<model::ClipExample> load_examples(const DatasetManifest& m, const LoadOptions& opts,
                                              const Logger& log = {});

/// Loads one audio file and returns its features (resampled to 44.1 kHz first).
dsp::FeatureTensor features_for_file(const std::filesystem::path& audio);

}  // namespace onsetsurv::data
