#pragma once

#include <cstddef>
#include <vector>

#include "onsetsurv/distributions.hpp"
#include "onsetsurv/features.hpp"
#include "onsetsurv/model.hpp"

namespace onsetsurv::infer {

/// Per-frame onset detection function.
struct ODFSeries {
  std::vector<double> values;
  double hop = 0.010;  // seconds
};

/// 1 - (1 - p1)(1 - p2).
double combine(double p1, double p2);

/// p1 = P(tte <= horizon) and p2 = P(tse <= horizon) on the shifted grid, i.e. F(horizon + 1).
double odf(dist::Family f, const dist::DistParams& tte, const dist::DistParams& tse, int horizon = 1);

/// Runs the model over every frame of a clip. Baselines return their sigmoid score.
ODFSeries compute_odf(const model::ModelWeights& w, const dsp::FeatureTensor& feat, int horizon = 1,
                      std::size_t batch_size = 256);

/// 5-point Hamming window normalised to unit sum.
const std::vector<double>& hamming5();

/// Centred convolution with hamming5(). Edges are zero-padded and the result renormalised by
/// the kernel mass that falls inside the series, so a constant series stays constant.
ODFSeries smooth(const ODFSeries& odf);

struct PeakPickConfig {
  double t1 = 0.030, t2 = 0.030, t3 = 0.120, t4 = 0.010, t5 = 0.0;  // seconds
  double delta = 0.5;
  double hop = 0.010;

  void validate() const;
  /// Window extents in whole frames (round(t / hop)).
  std::size_t w1() const;
  std::size_t w2() const;
  std::size_t w3() const;
  std::size_t w4() const;
  std::size_t w5() const;
};

/// Frame indices satisfying: (a) local maximum over [t-w1, t+w2], earliest frame of a plateau;
/// (b) value >= mean over [t-w3, t+w4] + delta; (c) more than w5 frames after the previous pick.
/// Windows are inclusive and clamped at the series ends.
std::vector<std::size_t> pick_peak_frames(const std::vector<double>& odf, const PeakPickConfig& cfg);

/// pick_peak_frames converted to seconds. The series' hop overrides cfg.hop.
std::vector<double> pick_peaks(const ODFSeries& odf, const PeakPickConfig& cfg);

}  // namespace onsetsurv::infer
