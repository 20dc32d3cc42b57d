#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "onsetsurv/features.hpp"
#include "onsetsurv/model.hpp"
#include "onsetsurv/targets.hpp"

namespace onsetsurv::model {

/// A clip ready for training: features plus per-frame targets at `threshold`. Training at
/// another threshold recomputes the targets on the fly.
struct ClipExample {
  std::string id;
  dsp::FeatureTensor features;
  std::vector<std::size_t> onset_frames;
  std::vector<double> onset_times;  // reference annotation, seconds
  std::vector<targets::TargetFrame> targets;
  int threshold = 10;
};

ClipExample make_example(std::string id, dsp::FeatureTensor features, const targets::OnsetAnnotation& ann,
                         int threshold);

/// Recomputes targets for another threshold without touching features.
ClipExample with_threshold(const ClipExample& clip, int threshold);

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when there is no validation split
  double momentum = 0.0;
};

struct TrainResult {
  ModelWeights weights;  // best epoch on validation loss (last epoch without validation)
  std::vector<EpochStats> trace;
  int best_epoch = 0;
  std::vector<std::size_t> validation_clips;  // indices into the dataset
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch SGD with the momentum schedule. Proposed models minimise the mean joint
/// censored NLL; baselines minimise binary cross-entropy against onset-frame labels.
TrainResult train(const std::vector<ClipExample>& dataset, const ModelConfig& config,
                  const EpochCallback& on_epoch = {});

/// Trains on dataset[subset] only; validation_clips still index into dataset.
TrainResult train(const std::vector<ClipExample>& dataset, const std::vector<std::size_t>& subset,
                  const ModelConfig& config, const EpochCallback& on_epoch = {});

/// Mean training objective of the clips' frames in inference mode.
double evaluate_loss(const ModelWeights& w, const std::vector<ClipExample>& clips,
                     const std::vector<std::size_t>& clip_indices, std::size_t max_frames = 0,
                     std::uint64_t seed = 0);

/// Mean TTE/TSE target over all frames; used to initialise the scale head.
double mean_target(const std::vector<ClipExample>& clips);

/// Baseline labels for one clip: 1 within radius frames of an onset, 0 elsewhere.
std::vector<double> frame_labels(const ClipExample& clip, int radius);

std::string trace_csv(const std::vector<EpochStats>& trace);

}  // namespace onsetsurv::model
