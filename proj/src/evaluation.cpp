#include "onsetsurv/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace onsetsurv::eval {

namespace {
void require_sorted(const std::vector<double>& v, const char* what) {
  if (!std::is_sorted(v.begin(), v.end()))
    throw std::invalid_argument(std::string("match_onsets: ") + what + " times are not sorted");
}
}  // namespace

Counts match_onsets(const std::vector<double>& pred, const std::vector<double>& ref, double tol) {
  require_sorted(pred, "detected");
  require_sorted(ref, "reference");
  if (!(tol >= 0.0)) throw std::invalid_argument("match_onsets: tolerance must be non-negative");
  Counts c;
  std::size_t i = 0, j = 0;
  while (i < pred.size() && j < ref.size()) {
    if (std::abs(pred[i] - ref[j]) <= tol) {
      ++c.tp;
      ++i;
      ++j;
    } else if (pred[i] < ref[j]) {
      ++c.fp;
      ++i;
    } else {
      ++c.fn;
      ++j;
    }
  }
  c.fp += pred.size() - i;
  c.fn += ref.size() - j;
  return c;
}

PRF prf(const Counts& c) {
  PRF r;
  if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (r.precision + r.recall > 0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

std::vector<double> default_delta_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 99; ++i) g.push_back(i / 100.0);
  return g;
}

SweepResult sweep_delta(const std::vector<infer::ODFSeries>& odfs, const std::vector<std::vector<double>>& refs,
                        const SweepConfig& cfg) {
  if (cfg.grid.empty()) throw std::invalid_argument("sweep_delta: empty delta grid");
  if (odfs.size() != refs.size())
    throw std::invalid_argument("sweep_delta: " + std::to_string(odfs.size()) + " detection functions but " +
                                std::to_string(refs.size()) + " annotations");
  SweepResult res;
  for (double delta : cfg.grid) {
    infer::PeakPickConfig pp = cfg.peaks;
    pp.delta = delta;
    DeltaPoint pt;
    pt.delta = delta;
    PRF avg;
    for (std::size_t c = 0; c < odfs.size(); ++c) {
      const Counts counts = match_onsets(infer::pick_peaks(odfs[c], pp), refs[c], cfg.tolerance);
      pt.counts += counts;
      if (cfg.per_clip_average) {
        const PRF s = prf(counts);
        avg.precision += s.precision;
        avg.recall += s.recall;
        avg.f1 += s.f1;
      }
    }
    if (cfg.per_clip_average && !odfs.empty()) {
      const double n = static_cast<double>(odfs.size());
      pt.score = {avg.precision / n, avg.recall / n, avg.f1 / n};
    } else {
      pt.score = prf(pt.counts);
    }
    res.points.push_back(pt);
  }
  for (std::size_t i = 1; i < res.points.size(); ++i)
    if (res.points[i].score.f1 > res.points[res.best].score.f1) res.best = i;
  return res;
}

std::vector<std::size_t> crossval_folds(std::size_t n_clips, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("cross validation needs at least 2 folds");
  if (n_clips < k)
    throw std::invalid_argument("cross validation: " + std::to_string(n_clips) + " clips cannot fill " +
                                std::to_string(k) + " folds");
  std::vector<std::size_t> order(n_clips);
  for (std::size_t i = 0; i < n_clips; ++i) order[i] = i;
  Rng rng(seed);
  shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> fold(n_clips);
  for (std::size_t pos = 0; pos < n_clips; ++pos) fold[order[pos]] = pos % k;
  return fold;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  if (values.empty()) return r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(values.size()));
  return r;
}

void summarise(EvalReport& report) {
  std::vector<double> raw, smoothed;
  for (const auto& f : report.folds) {
    raw.push_back(f.raw.best_f1());
    smoothed.push_back(f.smoothed.best_f1());
  }
  report.f1 = mean_std(raw);
  report.f1_smoothed = mean_std(smoothed);
}

FoldResult evaluate_model(const model::ModelWeights& w, const std::vector<model::ClipExample>& clips,
                          const std::vector<std::size_t>& which, const SweepConfig& cfg) {
  FoldResult fr;
  fr.test_clips = which;
  std::vector<infer::ODFSeries> raw, smoothed;
  std::vector<std::vector<double>> refs;
  for (auto c : which) {
    raw.push_back(infer::compute_odf(w, clips.at(c).features));
    smoothed.push_back(infer::smooth(raw.back()));
    refs.push_back(clips[c].onset_times);
  }
  fr.raw = sweep_delta(raw, refs, cfg);
  fr.smoothed = sweep_delta(smoothed, refs, cfg);
  return fr;
}

namespace {
std::string model_label(const model::ModelConfig& c) {
  return c.variant == model::Variant::baseline ? "baseline" : dist::to_string(c.family);
}
}  // namespace

EvalReport run_crossval(const std::vector<model::ClipExample>& clips, const model::ModelConfig& config,
                        std::size_t k, std::uint64_t seed, const SweepConfig& sweep, const FoldCallback& on_fold) {
  config.validate();
  const auto fold_of = crossval_folds(clips.size(), k, seed);
  EvalReport report;
  report.model = model_label(config);
  report.threshold = config.variant == model::Variant::proposed ? config.threshold : 0;
  report.grid = sweep.grid;

  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < clips.size(); ++i) (fold_of[i] == f ? test_idx : train_idx).push_back(i);
    model::ModelConfig fold_cfg = config;
    fold_cfg.seed = config.seed + f;
    auto trained = model::train(clips, train_idx, fold_cfg);
    trained.weights.metadata["fold"] = f;
    FoldResult fr = evaluate_model(trained.weights, clips, test_idx, sweep);
    fr.fold = f;
    fr.best_epoch = trained.best_epoch;
    if (on_fold) on_fold(fr);
    report.folds.push_back(std::move(fr));
  }
  summarise(report);
  return report;
}

std::vector<EvalReport> run_protocol(const std::vector<model::ClipExample>& clips, const model::ModelConfig& base,
                                     const ProtocolConfig& protocol, std::uint64_t seed, const SweepConfig& sweep,
                                     const std::function<void(const std::string&)>& log) {
  std::vector<model::ModelConfig> runs;
  for (auto family : protocol.families)
    for (int threshold : protocol.thresholds) {
      auto c = base;
      c.variant = model::Variant::proposed;
      c.family = family;
      c.threshold = threshold;
      runs.push_back(c);
    }
  if (protocol.include_baseline) {
    auto c = base;
    c.variant = model::Variant::baseline;
    runs.push_back(c);
  }
  std::vector<EvalReport> reports;
  for (const auto& cfg : runs) {
    const std::string label =
        model_label(cfg) + (cfg.variant == model::Variant::proposed ? " threshold " + std::to_string(cfg.threshold) : "");
    if (log) log("cross validation: " + label);
    reports.push_back(run_crossval(clips, cfg, protocol.folds, seed, sweep, [&](const FoldResult& fr) {
      if (log) {
        std::ostringstream os;
        os << "  fold " << fr.fold << ": F1 " << std::fixed << std::setprecision(4) << fr.raw.best_f1() << " (delta "
           << fr.raw.best_delta() << "), F1(S) " << fr.smoothed.best_f1() << " (delta " << fr.smoothed.best_delta()
           << ")";
        log(os.str());
      }
    }));
  }
  return reports;
}

std::string report_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "model,threshold,fold,smoothing,delta,tp,fp,fn,precision,recall,f1\n";
  for (const auto& r : reports)
    for (const auto& f : r.folds)
      for (int s = 0; s < 2; ++s)
        for (const auto& p : (s ? f.smoothed : f.raw).points)
          os << r.model << ',' << r.threshold << ',' << f.fold << ',' << (s ? "hamming5" : "none") << ',' << p.delta
             << ',' << p.counts.tp << ',' << p.counts.fp << ',' << p.counts.fn << ',' << p.score.precision << ','
             << p.score.recall << ',' << p.score.f1 << '\n';
  return os.str();
}

std::string summary_table(const std::vector<EvalReport>& reports) {
  auto cell = [](const MeanStd& m) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << m.mean << " +- " << m.std;
    return os.str();
  };
  std::ostringstream os;
  os << std::left << std::setw(14) << "Model" << std::setw(11) << "Threshold" << std::setw(17) << "F1" << "F1(S)\n";
  for (const auto& r : reports)
    os << std::left << std::setw(14) << r.model << std::setw(11) << (r.threshold ? std::to_string(r.threshold) : "-")
       << std::setw(17) << cell(r.f1) << cell(r.f1_smoothed) << '\n';
  return os.str();
}

}  // namespace onsetsurv::eval
