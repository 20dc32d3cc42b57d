// onsetsurv: synthesise data, train, detect and evaluate onset models.

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "json_config.hpp"
#include "onsetsurv/dataset.hpp"
#include "onsetsurv/evaluation.hpp"
#include "onsetsurv/inference.hpp"
#include "onsetsurv/io.hpp"
#include "onsetsurv/runtime.hpp"

namespace fs = std::filesystem;
using namespace onsetsurv;

namespace {

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

struct ModelOptions {
  std::string variant = "proposed";
  std::string family = "loglogistic";
  model::ModelConfig cfg;

  void add_to(CLI::App& app) {
    app.add_option("--variant", variant, "proposed or baseline")
        ->check(CLI::IsMember({"proposed", "baseline"}))
        ->capture_default_str();
    app.add_option("--family", family, "loglogistic or pareto")
        ->check(CLI::IsMember({"loglogistic", "pareto"}))
        ->capture_default_str();
    app.add_option("--threshold", cfg.threshold, "TTE/TSE threshold in frames")->capture_default_str();
    app.add_option("--gamma", cfg.gamma, "upper bound of the shape parameter")->capture_default_str();
    app.add_option("--epochs", cfg.epochs)->capture_default_str();
    app.add_option("--lr", cfg.lr, "learning rate")->capture_default_str();
    app.add_option("--batch-size", cfg.batch_size)->capture_default_str();
    app.add_option("--dropout", cfg.dropout)->capture_default_str();
    app.add_option("--frames-per-epoch", cfg.frames_per_epoch, "frames drawn per epoch, 0 for all")
        ->capture_default_str();
    app.add_option("--val-fraction", cfg.val_fraction, "share of training clips held out")->capture_default_str();
    app.add_option("--val-frames", cfg.val_frames, "validation frames scored per epoch, 0 for all")
        ->capture_default_str();
    app.add_option("--label-radius", cfg.baseline_label_radius, "baseline positives within this many frames")
        ->capture_default_str();
  }

  model::ModelConfig resolve(std::uint64_t seed) const {
    model::ModelConfig c = cfg;
    c.variant = model::variant_from_string(variant);
    c.family = dist::family_from_string(family);
    c.seed = seed;
    c.validate();
    return c;
  }
};

struct SweepOptions {
  std::vector<double> grid;
  double tolerance = eval::kTolerance;
  bool per_clip = false;

  void add_to(CLI::App& app) {
    app.add_option("--delta-grid", grid, "comma-separated delta values (default 0.01..0.99)")->delimiter(',');
    app.add_option("--tolerance", tolerance, "matching tolerance in seconds")->capture_default_str();
    app.add_flag("--per-clip", per_clip, "average per-clip scores instead of pooling counts");
  }

  eval::SweepConfig resolve() const {
    eval::SweepConfig s;
    if (!grid.empty()) s.grid = grid;
    s.tolerance = tolerance;
    s.per_clip_average = per_clip;
    return s;
  }
};

std::string grid_string(const std::vector<double>& grid) {
  std::ostringstream os;
  for (std::size_t i = 0; i < grid.size(); ++i) os << (i ? "," : "") << grid[i];
  return os.str();
}

data::DatasetManifest open_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("data directory '" + dir.string() + "' does not exist");
  if (fs::exists(dir / "manifest.json")) return data::load_manifest(dir / "manifest.json");
  return data::load_dataset(dir, log_line);
}

std::vector<model::ClipExample> load_clips(const fs::path& dir, int threshold, const fs::path& cache) {
  const auto manifest = open_dataset(dir);
  log_line("loading " + std::to_string(manifest.clips.size()) + " clips from " + dir.string());
  data::LoadOptions opts;
  opts.threshold = threshold;
  opts.cache_dir = cache;
  return data::load_examples(manifest, opts, log_line);
}

void print_config(const CLI::App& sub) {
  nlohmann::json j;
  j[sub.get_name()] = cli::JsonConfig::to_json(&sub, true);
  j[sub.get_name()].erase("config");
  std::cerr << "resolved config:\n" << j.dump(2) << std::endl;
}

void write_json(const fs::path& path, const nlohmann::json& j) { io::atomic_write(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------

struct SynthCommand {
  synth::SynthSpec spec;
  std::string kind = "click";
  std::size_t clips = 1;
  std::string out;

  void add_to(CLI::App& app) {
    app.add_option("--out", out, "output dataset directory")->required();
    app.add_option("--clips", clips, "number of clips")->capture_default_str();
    app.add_option("--duration", spec.duration, "seconds per clip")->capture_default_str();
    app.add_option("--density", spec.density, "onsets per second")->capture_default_str();
    app.add_option("--min-gap", spec.min_gap, "minimum seconds between onsets")->capture_default_str();
    app.add_option("--kind", kind, "click, tone, noise or mixed")
        ->check(CLI::IsMember({"click", "tone", "noise", "mixed"}))
        ->capture_default_str();
    app.add_option("--snr", spec.snr_db, "event-to-background ratio in dB")->capture_default_str();
    app.add_option("--sample-rate", spec.sample_rate)->capture_default_str();
  }

  void run(std::uint64_t seed) {
    spec.kind = synth::event_kind_from_string(kind);
    spec.seed = seed;
    const auto m = data::write_synthetic_dataset(out, spec, clips);
    log_line("wrote " + std::to_string(m.clips.size()) + " clips to " + out);
  }
};

struct TrainCommand {
  ModelOptions model;
  SweepOptions sweep;
  std::string data_dir, out, cache;

  void add_to(CLI::App& app) {
    app.add_option("--data", data_dir, "dataset directory (audio/, annotations/)")->required();
    app.add_option("--out", out, "output directory for model.ckpt and loss.csv")->required();
    app.add_option("--cache", cache, "feature cache directory (default <out>/features)");
    model.add_to(app);
    sweep.add_to(app);
  }

  void run(std::uint64_t seed) {
    const auto cfg = model.resolve(seed);
    fs::create_directories(out);
    const auto clips = load_clips(data_dir, cfg.threshold, cache.empty() ? fs::path(out) / "features" : fs::path(cache));
    std::vector<model::EpochStats> trace;
    auto result = model::train(clips, cfg, [&](const model::EpochStats& s) {
      trace.push_back(s);
      std::ostringstream os;
      os << "epoch " << s.epoch << ": train " << std::setprecision(6) << s.train_loss << ", val " << s.val_loss
         << ", momentum " << s.momentum;
      log_line(os.str());
      io::atomic_write(fs::path(out) / "loss.csv", model::trace_csv(trace));
    });

    if (!result.validation_clips.empty()) {
      const auto fr = eval::evaluate_model(result.weights, clips, result.validation_clips, sweep.resolve());
      result.weights.metadata["delta"] = fr.raw.best_delta();
      result.weights.metadata["delta_smoothed"] = fr.smoothed.best_delta();
      result.weights.metadata["validation_f1"] = fr.raw.best_f1();
      result.weights.metadata["validation_f1_smoothed"] = fr.smoothed.best_f1();
      std::ostringstream os;
      os << "validation F1 " << std::fixed << std::setprecision(4) << fr.raw.best_f1() << " at delta "
         << fr.raw.best_delta() << ", smoothed " << fr.smoothed.best_f1() << " at delta " << fr.smoothed.best_delta();
      log_line(os.str());
    }
    model::save_model(fs::path(out) / "model.ckpt", result.weights);
    write_json(fs::path(out) / "config.json", model::to_json(cfg));
    log_line("best epoch " + std::to_string(result.best_epoch) + "; wrote " + (fs::path(out) / "model.ckpt").string());
  }
};

struct DetectCommand {
  std::string model_path, audio, out, odf_out;
  double delta = -1.0;
  bool smooth = false;
  int horizon = 1;
  infer::PeakPickConfig peaks;
  double t_ms[5] = {30, 30, 120, 10, 0};

  void add_to(CLI::App& app) {
    app.add_option("--model", model_path, "checkpoint written by train")->required();
    app.add_option("--audio", audio, "WAV file")->required();
    app.add_option("--out", out, "onset list to write (one time in seconds per line)")->required();
    app.add_option("--delta", delta, "peak threshold offset (default: the checkpoint's validation optimum, else 0.5)");
    app.add_flag("--smooth", smooth, "smooth the detection function with a 5-point Hamming window");
    app.add_option("--horizon", horizon, "p = P(T <= horizon) in frames")->capture_default_str();
    app.add_option("--odf-out", odf_out, "also write the detection function as CSV");
    const char* names[5] = {"--t1", "--t2", "--t3", "--t4", "--t5"};
    const char* help[5] = {"max window before t (ms)", "max window after t (ms)", "mean window before t (ms)",
                           "mean window after t (ms)", "minimum spacing (ms)"};
    for (int i = 0; i < 5; ++i) app.add_option(names[i], t_ms[i], help[i])->capture_default_str();
  }

  void run(std::uint64_t) {
    const auto w = model::load_model(model_path);
    const auto feat = data::features_for_file(audio);
    auto odf = infer::compute_odf(w, feat, horizon);
    if (smooth) odf = infer::smooth(odf);
    peaks.t1 = t_ms[0] / 1000.0;
    peaks.t2 = t_ms[1] / 1000.0;
    peaks.t3 = t_ms[2] / 1000.0;
    peaks.t4 = t_ms[3] / 1000.0;
    peaks.t5 = t_ms[4] / 1000.0;
    peaks.delta = delta;
    if (delta < 0.0) {
      const char* key = smooth ? "delta_smoothed" : "delta";
      peaks.delta = w.metadata.contains(key) ? w.metadata[key].get<double>() : 0.5;
    }
    const auto onsets = infer::pick_peaks(odf, peaks);
    targets::write_onsets(out, onsets);
    if (!odf_out.empty()) {
      std::ostringstream os;
      os << std::setprecision(10) << "frame,time,odf\n";
      for (std::size_t t = 0; t < odf.values.size(); ++t)
        os << t << ',' << static_cast<double>(t) * odf.hop << ',' << odf.values[t] << '\n';
      io::atomic_write(odf_out, os.str());
    }
    std::ostringstream os;
    os << onsets.size() << " onsets (delta " << peaks.delta << (smooth ? ", smoothed" : "") << ") written to " << out;
    log_line(os.str());
  }
};

void write_reports(const fs::path& out, const std::vector<eval::EvalReport>& reports,
                   const eval::SweepConfig& sweep) {
  fs::create_directories(out);
  io::atomic_write(out / "report.csv", eval::report_csv(reports));
  const std::string table = eval::summary_table(reports) + "delta grid: " + grid_string(sweep.grid) + "\n";
  io::atomic_write(out / "summary.txt", table);
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : r.folds)
      folds.push_back({{"fold", f.fold},
                       {"clips", f.test_clips.size()},
                       {"best_epoch", f.best_epoch},
                       {"f1", f.raw.best_f1()},
                       {"delta", f.raw.best_delta()},
                       {"f1_smoothed", f.smoothed.best_f1()},
                       {"delta_smoothed", f.smoothed.best_delta()}});
    j.push_back({{"model", r.model},
                 {"threshold", r.threshold},
                 {"f1_mean", r.f1.mean},
                 {"f1_std", r.f1.std},
                 {"f1_smoothed_mean", r.f1_smoothed.mean},
                 {"f1_smoothed_std", r.f1_smoothed.std},
                 {"delta_grid", sweep.grid},
                 {"folds", folds}});
  }
  write_json(out / "report.json", j);
  std::cout << table;
}

struct EvalCommand {
  ModelOptions model;
  SweepOptions sweep;
  std::string model_path, data_dir, out, cache;
  std::size_t folds = 0;

  void add_to(CLI::App& app) {
    app.add_option("--model", model_path, "checkpoint to score (its config is reused for cross validation)");
    app.add_option("--data", data_dir, "dataset directory")->required();
    app.add_option("--out", out, "report directory")->required();
    app.add_option("--folds", folds, "k-fold cross validation; 0 scores the checkpoint on every clip")
        ->capture_default_str();
    app.add_option("--cache", cache, "feature cache directory (default <out>/features)");
    model.add_to(app);
    sweep.add_to(app);
  }

  void run(std::uint64_t seed) {
    if (folds == 0 && model_path.empty()) throw std::runtime_error("eval: give --model, --folds or both");
    if (folds == 1) throw std::runtime_error("eval: --folds must be 0 or at least 2");
    const auto sw = sweep.resolve();
    model::ModelConfig cfg;
    std::optional<model::ModelWeights> weights;
    if (!model_path.empty()) {
      weights = model::load_model(model_path);
      cfg = weights->config;
      cfg.seed = seed;
    } else {
      cfg = model.resolve(seed);
    }
    fs::create_directories(out);
    const auto clips = load_clips(data_dir, cfg.threshold, cache.empty() ? fs::path(out) / "features" : fs::path(cache));
    eval::EvalReport report;
    if (folds == 0) {
      std::vector<std::size_t> all(clips.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      report.model = cfg.variant == model::Variant::baseline ? "baseline" : dist::to_string(cfg.family);
      report.threshold = cfg.variant == model::Variant::proposed ? cfg.threshold : 0;
      report.grid = sw.grid;
      report.folds.push_back(eval::evaluate_model(*weights, clips, all, sw));
      eval::summarise(report);
    } else {
      report = eval::run_crossval(clips, cfg, folds, seed, sw, [](const eval::FoldResult& fr) {
        std::ostringstream os;
        os << "fold " << fr.fold << ": F1 " << std::fixed << std::setprecision(4) << fr.raw.best_f1() << ", F1(S) "
           << fr.smoothed.best_f1();
        log_line(os.str());
      });
    }
    write_reports(out, {report}, sw);
  }
};

struct ProtocolCommand {
  ModelOptions model;
  SweepOptions sweep;
  std::string data_dir, out, cache;
  eval::ProtocolConfig protocol;
  std::vector<std::string> families = {"loglogistic", "pareto"};
  bool no_baseline = false;

  void add_to(CLI::App& app) {
    app.add_option("--data", data_dir, "dataset directory")->required();
    app.add_option("--out", out, "report directory")->required();
    app.add_option("--cache", cache, "feature cache directory (default <out>/features)");
    app.add_option("--folds", protocol.folds)->capture_default_str();
    app.add_option("--thresholds", protocol.thresholds, "comma-separated thresholds in frames")
        ->delimiter(',')
        ->capture_default_str();
    app.add_option("--families", families, "comma-separated distribution families")
        ->delimiter(',')
        ->check(CLI::IsMember({"loglogistic", "pareto"}))
        ->capture_default_str();
    app.add_flag("--no-baseline", no_baseline, "skip the binary baseline");
    model.add_to(app);
    sweep.add_to(app);
  }

  void run(std::uint64_t seed) {
    auto base = model.resolve(seed);
    protocol.families.clear();
    for (const auto& f : families) protocol.families.push_back(dist::family_from_string(f));
    protocol.include_baseline = !no_baseline;
    const auto sw = sweep.resolve();
    fs::create_directories(out);
    const auto clips = load_clips(data_dir, base.threshold, cache.empty() ? fs::path(out) / "features" : fs::path(cache));
    const auto reports = eval::run_protocol(clips, base, protocol, seed, sw, log_line);
    write_reports(out, reports, sw);
  }
};

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Onset detection with survival-model density predictors"};
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<cli::JsonConfig>());
  app.set_config("--config", "",
                 "JSON file keyed by command name, e.g. {\"train\": {\"epochs\": 50}}; flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  std::uint64_t seed = 1;

  SynthCommand synth_cmd;
  TrainCommand train_cmd;
  DetectCommand detect_cmd;
  EvalCommand eval_cmd;
  ProtocolCommand protocol_cmd;

  auto setup = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--seed", seed, "seed for every random draw")->capture_default_str();
    cmd.add_to(*sub);
    return sub;
  };
  auto* synth_app = setup("synth", "write a synthetic dataset with exact onset annotations", synth_cmd);
  auto* train_app = setup("train", "train a density predictor or the binary baseline", train_cmd);
  auto* detect_app = setup("detect", "detect onsets in one audio file", detect_cmd);
  auto* eval_app = setup("eval", "score a checkpoint or cross-validate a configuration", eval_cmd);
  auto* protocol_app =
      setup("protocol", "full comparison: thresholds x families x smoothing, k-fold, delta sweep", protocol_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (auto* sub : app.get_subcommands()) print_config(*sub);
    if (synth_app->parsed()) synth_cmd.run(seed);
    if (train_app->parsed()) train_cmd.run(seed);
    if (detect_app->parsed()) detect_cmd.run(seed);
    if (eval_app->parsed()) eval_cmd.run(seed);
    if (protocol_app->parsed()) protocol_cmd.run(seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
