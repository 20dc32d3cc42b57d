#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "onsetsurv/inference.hpp"
#include "onsetsurv/trainer.hpp"

namespace onsetsurv::eval {

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const Counts&, const Counts&) = default;
};

inline constexpr double kTolerance = 0.05;  // seconds

/// One-to-one matching of sorted detections to sorted references with |pred - ref| <= tol.
/// Greedy in time order, which is maximum-cardinality for a fixed tolerance on a line.
Counts match_onsets(const std::vector<double>& pred, const std::vector<double>& ref, double tol = kTolerance);

struct PRF {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

/// Zero wherever a denominator is zero.
PRF prf(const Counts& c);

/// 0.01, 0.02, ..., 0.99
std::vector<double> default_delta_grid();

struct SweepConfig {
  infer::PeakPickConfig peaks;  // delta is overridden by the grid
  std::vector<double> grid = default_delta_grid();
  double tolerance = kTolerance;
  /// false: pool counts over clips; true: average per-clip precision, recall and F1.
  bool per_clip_average = false;
};

struct DeltaPoint {
  double delta = 0.0;
  Counts counts;
  PRF score;
};

struct SweepResult {
  std::vector<DeltaPoint> points;
  std::size_t best = 0;  // first grid point reaching the highest F1

  double best_delta() const { return points.at(best).delta; }
  double best_f1() const { return points.at(best).score.f1; }
};

SweepResult sweep_delta(const std::vector<infer::ODFSeries>& odfs, const std::vector<std::vector<double>>& refs,
                        const SweepConfig& cfg);

/// Fold index in [0, k) per clip: a seeded shuffle dealt round-robin, so fold sizes differ by at most one.
std::vector<std::size_t> crossval_folds(std::size_t n_clips, std::size_t k, std::uint64_t seed);

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::size_t> test_clips;
  SweepResult raw, smoothed;
  int best_epoch = 0;
};

struct MeanStd {
  double mean = 0.0, std = 0.0;  // population standard deviation
};
MeanStd mean_std(const std::vector<double>& values);

struct EvalReport {
  std::string model;  // e.g. "loglogistic", "baseline"
  int threshold = 0;  // 0 when not applicable
  std::vector<FoldResult> folds;
  MeanStd f1, f1_smoothed;
  std::vector<double> grid;
};

/// Fills the summary statistics from the fold results.
void summarise(EvalReport& report);

/// Sweeps detections of a trained model over clips (no training).
FoldResult evaluate_model(const model::ModelWeights& w, const std::vector<model::ClipExample>& clips,
                          const std::vector<std::size_t>& which, const SweepConfig& cfg);

using FoldCallback = std::function<void(const FoldResult&)>;

/// k-fold cross validation: trains on k-1 folds, sweeps delta on the held-out fold.
EvalReport run_crossval(const std::vector<model::ClipExample>& clips, const model::ModelConfig& config,
                        std::size_t k, std::uint64_t seed, const SweepConfig& sweep,
                        const FoldCallback& on_fold = {});

struct ProtocolConfig {
  std::vector<int> thresholds = {5, 10, 20};
  std::vector<dist::Family> families = {dist::Family::loglogistic, dist::Family::pareto};
  bool include_baseline = true;
  std::size_t folds = 8;
};

/// Every (family, threshold) cross validation plus the baseline, each with raw and smoothed ODFs.
std::vector<EvalReport> run_protocol(const std::vector<model::ClipExample>& clips, const model::ModelConfig& base,
                                     const ProtocolConfig& protocol, std::uint64_t seed, const SweepConfig& sweep,
                                     const std::function<void(const std::string&)>& log = {});

/// Long-form CSV: model,threshold,fold,smoothing,delta,tp,fp,fn,precision,recall,f1
std::string report_csv(const std::vector<EvalReport>& reports);

/// Plain-text table with columns Model, Threshold, F1, F1(S) (mean +- std over folds).
std::string summary_table(const std::vector<EvalReport>& reports);

}  // namespace onsetsurv::eval
