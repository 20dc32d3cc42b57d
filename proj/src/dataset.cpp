#include "onsetsurv/dataset.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "onsetsurv/features.hpp"
#include "onsetsurv/io.hpp"
#include "onsetsurv/resample.hpp"

namespace onsetsurv::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kSampleRate = 44100.0;
constexpr std::string_view kFeatureTag = "onsetsurv-features-v1";

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<fs::path> regular_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

DatasetManifest load_dataset(const fs::path& root, const Logger& log) {
  if (!fs::is_directory(root)) throw std::invalid_argument("dataset directory '" + root.string() + "' does not exist");
  std::map<std::string, fs::path> audio, annotations;
  for (const auto& p : regular_files(root / "audio")) {
    if (lower(p.extension().string()) == ".wav") audio.emplace(p.stem().string(), p);
  }
  for (const auto& p : regular_files(root / "annotations")) {
    const std::string name = p.filename().string();
    for (const auto& suffix : kAnnotationSuffixes)
      if (ends_with(name, suffix)) {
        annotations.emplace(name.substr(0, name.size() - suffix.size()), p);  // first suffix wins
        break;
      }
  }

  DatasetManifest m;
  m.root = root;
  for (const auto& [stem, path] : audio) {
    auto it = annotations.find(stem);
    if (it == annotations.end()) {
      if (log) log("skipping " + path.string() + ": no annotation file");
      continue;
    }
    m.clips.push_back({stem, fs::relative(path, root), fs::relative(it->second, root), {}});
  }
  for (const auto& [stem, path] : annotations)
    if (!audio.contains(stem) && log) log("skipping " + path.string() + ": no audio file");

  if (m.clips.empty()) {
    std::string msg = "no audio/annotation pairs found under '" + root.string() + "' (0 pairs; " +
                      std::to_string(audio.size()) + " audio files in audio/, " +
                      std::to_string(annotations.size()) + " annotation files in annotations/)";
    for (const auto& [stem, path] : audio) msg += "\n  unpaired audio: " + path.string();
    for (const auto& [stem, path] : annotations) msg += "\n  unpaired annotation: " + path.string();
    throw std::runtime_error(msg);
  }
  return m;
}

std::string manifest_json(const DatasetManifest& m) {
  json clips = json::array();
  for (const auto& c : m.clips)
    clips.push_back({{"id", c.id},
                     {"audio", c.audio.generic_string()},
                     {"annotation", c.annotation.generic_string()},
                     {"features", c.features.generic_string()}});
  json j = {{"version", 1}, {"clips", clips}, {"folds", m.folds}};
  return j.dump(2) + "\n";
}

DatasetManifest parse_manifest(const std::string& text, const fs::path& root) {
  const json j = json::parse(text);
  if (j.at("version").get<int>() != 1) throw std::runtime_error("unsupported manifest version");
  DatasetManifest m;
  m.root = root;
  std::set<std::string> ids;
  for (const auto& c : j.at("clips")) {
    ClipEntry e{c.at("id").get<std::string>(), fs::path(c.at("audio").get<std::string>()),
                fs::path(c.at("annotation").get<std::string>()), fs::path(c.value("features", std::string()))};
    if (!ids.insert(e.id).second) throw std::runtime_error("manifest lists clip '" + e.id + "' twice");
    m.clips.push_back(std::move(e));
  }
  m.folds = j.value("folds", std::vector<std::size_t>{});
  if (!m.folds.empty() && m.folds.size() != m.clips.size())
    throw std::runtime_error("manifest fold list does not match its clip list");
  return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& m) { io::atomic_write(path, manifest_json(m)); }

DatasetManifest load_manifest(const fs::path& path) {
  return parse_manifest(io::read_file(path), path.parent_path());
}

std::uint64_t clip_seed(std::uint64_t base, std::size_t index) {
  // splitmix64 finaliser over (base, index)
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

DatasetManifest write_synthetic_dataset(const fs::path& root, const synth::SynthSpec& spec, std::size_t n_clips) {
  spec.validate();
  if (n_clips == 0) throw std::invalid_argument("synthetic dataset needs at least one clip");
  fs::create_directories(root / "audio");
  fs::create_directories(root / "annotations");
  DatasetManifest m;
  m.root = root;
  const int width = std::max<int>(3, static_cast<int>(std::to_string(n_clips - 1).size()));
  for (std::size_t i = 0; i < n_clips; ++i) {
    synth::SynthSpec s = spec;
    s.seed = n_clips == 1 ? spec.seed : clip_seed(spec.seed, i);
    const auto clip = synth::synthesize(s);
    std::string num = std::to_string(i);
    const std::string id = "synth_" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
    ClipEntry e{id, fs::path("audio") / (id + ".wav"), fs::path("annotations") / (id + ".onsets.txt"), {}};
    dsp::write_wav(root / e.audio, clip.audio, dsp::WavFormat::float32);
    targets::write_onsets(root / e.annotation, clip.annotation.onsets);
    m.clips.push_back(std::move(e));
  }
  save_manifest(root / "manifest.json", m);
  return m;
}

namespace {
dsp::FeatureTensor featurise(const std::string& wav_bytes) {
  return dsp::build_features(dsp::resample_to(dsp::decode_wav(wav_bytes), kSampleRate));
}
}  // namespace

dsp::FeatureTensor features_for_file(const fs::path& audio) { return featurise(io::read_file(audio)); }

std::vector<model::ClipExample> load_examples(const DatasetManifest& m, const LoadOptions& opts, const Logger& log) {
  std::vector<model::ClipExample> out;
  out.reserve(m.clips.size());
  if (!opts.cache_dir.empty()) fs::create_directories(opts.cache_dir);
  for (const auto& c : m.clips) {
    const std::string bytes = io::read_file(m.root / c.audio);
    const std::uint64_t hash = io::fnv1a64(std::string(kFeatureTag) + bytes);
    std::optional<dsp::FeatureTensor> feat;
    fs::path cache;
    if (!c.features.empty())
      cache = m.root / c.features;
    else if (!opts.cache_dir.empty())
      cache = opts.cache_dir / (c.id + ".feat");
    if (!cache.empty() && fs::exists(cache)) {
      try {
        auto cached = dsp::load_feature_cache(cache);
        if (cached.source_hash == hash) feat = std::move(cached.features);
      } catch (const std::exception& e) {
        if (log) log("ignoring unreadable feature cache " + cache.string() + ": " + e.what());
      }
    }
    if (!feat) {
      feat = featurise(bytes);
      if (!cache.empty()) dsp::save_feature_cache(cache, *feat, hash);
    }
    std::string warning;
    const auto ann = targets::read_annotation(m.root / c.annotation, &warning);
    if (!warning.empty() && log) log((m.root / c.annotation).string() + ": " + warning);
    out.push_back(model::make_example(c.id, std::move(*feat), ann, opts.threshold));
  }
  return out;
}

}  // namespace onsetsurv::data
