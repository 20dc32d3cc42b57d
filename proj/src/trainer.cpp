#include "onsetsurv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "onsetsurv/optimizer.hpp"

namespace onsetsurv::model {

using nn::Graph;
using nn::Mode;
using nn::Tensor;

namespace {
constexpr std::size_t kChunkValues = dsp::kChunkFrames * dsp::kMelBands * dsp::kChannels;

struct FrameRef {
  std::uint32_t clip;
  std::uint32_t frame;
};

Tensor gather_chunks(const std::vector<ClipExample>& clips, std::span<const FrameRef> refs) {
  Tensor batch({refs.size(), dsp::kChunkFrames, dsp::kMelBands, dsp::kChannels});
  for (std::size_t i = 0; i < refs.size(); ++i)
    dsp::copy_chunk(clips[refs[i].clip].features, refs[i].frame,
                    std::span<double>(batch.raw() + i * kChunkValues, kChunkValues));
  return batch;
}

std::vector<FrameRef> frames_of(const std::vector<ClipExample>& clips, const std::vector<std::size_t>& which) {
  std::vector<FrameRef> refs;
  for (auto c : which)
    for (std::size_t t = 0; t < clips[c].features.frames(); ++t)
      refs.push_back({static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(t)});
  return refs;
}

// Targets of every clip at one threshold; clips already at that threshold are borrowed.
class TargetView {
 public:
  TargetView(const std::vector<ClipExample>& clips, int threshold) : own_(clips.size()), view_(clips.size()) {
    for (std::size_t c = 0; c < clips.size(); ++c) {
      if (clips[c].threshold != threshold)
        own_[c] = targets::compute_targets(clips[c].onset_frames, clips[c].features.frames(), threshold);
      view_[c] = clips[c].threshold == threshold ? &clips[c].targets : &own_[c];
    }
  }
  const std::vector<targets::TargetFrame>& of(std::size_t c) const { return *view_[c]; }

 private:
  std::vector<std::vector<targets::TargetFrame>> own_;
  std::vector<const std::vector<targets::TargetFrame>*> view_;
};

double loss_over(const ModelWeights& w, const std::vector<ClipExample>& clips, const TargetView& targets,
                 std::vector<FrameRef> refs, std::size_t max_frames, std::uint64_t seed) {
  if (refs.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (max_frames > 0 && refs.size() > max_frames) {
    Rng rng(seed);
    shuffle(refs.begin(), refs.end(), rng);
    refs.resize(max_frames);
  }
  std::vector<std::vector<double>> labels(clips.size());
  if (w.config.variant == Variant::baseline)
    for (const auto& r : refs)
      if (labels[r.clip].empty()) labels[r.clip] = frame_labels(clips[r.clip], w.config.baseline_label_radius);

  constexpr std::size_t kBatch = 512;
  double total = 0.0;
  for (std::size_t start = 0; start < refs.size(); start += kBatch) {
    const auto part = std::span<const FrameRef>(refs).subspan(start, std::min(kBatch, refs.size() - start));
    const Tensor chunks = gather_chunks(clips, part);
    if (w.config.variant == Variant::proposed) {
      const auto pred = predict_params(w, chunks, kBatch);
      for (std::size_t i = 0; i < part.size(); ++i)
        total += dist::joint_frame_loss(w.config.family, pred[i].tte, pred[i].tse,
                                        targets.of(part[i].clip)[part[i].frame]);
    } else {
      const auto scores = predict_scores(w, chunks, kBatch);
      for (std::size_t i = 0; i < part.size(); ++i) {
        const double y = labels[part[i].clip][part[i].frame];
        const double p = std::clamp(scores[i], 1e-12, 1.0 - 1e-12);
        total += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
      }
    }
  }
  return total / static_cast<double>(refs.size());
}

}  // namespace

ClipExample make_example(std::string id, dsp::FeatureTensor features, const targets::OnsetAnnotation& ann,
                         int threshold) {
  ClipExample ex;
  ex.id = std::move(id);
  ex.onset_times = ann.onsets;
  ex.onset_frames = targets::onset_frames(ann, features.hop, features.frames());
  ex.targets = targets::compute_targets(ex.onset_frames, features.frames(), threshold);
  ex.features = std::move(features);
  ex.threshold = threshold;
  return ex;
}

ClipExample with_threshold(const ClipExample& clip, int threshold) {
  ClipExample ex = clip;
  ex.targets = targets::compute_targets(ex.onset_frames, ex.features.frames(), threshold);
  ex.threshold = threshold;
  return ex;
}

double mean_target(const std::vector<ClipExample>& clips) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : clips)
    for (const auto& t : c.targets) {
      sum += t.tte_T + t.tse_T;
      n += 2;
    }
  return n ? sum / static_cast<double>(n) : 1.0;
}

std::vector<double> frame_labels(const ClipExample& clip, int radius) {
  std::vector<double> labels(clip.features.frames(), 0.0);
  for (auto f : clip.onset_frames) {
    const long lo = std::max(0L, static_cast<long>(f) - radius);
    const long hi = std::min(static_cast<long>(labels.size()) - 1, static_cast<long>(f) + radius);
    for (long t = lo; t <= hi; ++t) labels[static_cast<std::size_t>(t)] = 1.0;
  }
  return labels;
}

double evaluate_loss(const ModelWeights& w, const std::vector<ClipExample>& clips,
                     const std::vector<std::size_t>& clip_indices, std::size_t max_frames, std::uint64_t seed) {
  return loss_over(w, clips, TargetView(clips, w.config.threshold), frames_of(clips, clip_indices), max_frames,
                   seed);
}

TrainResult train(const std::vector<ClipExample>& dataset, const ModelConfig& config, const EpochCallback& on_epoch) {
  std::vector<std::size_t> all(dataset.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return train(dataset, all, config, on_epoch);
}

TrainResult train(const std::vector<ClipExample>& dataset, const std::vector<std::size_t>& subset,
                  const ModelConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (subset.empty()) throw std::invalid_argument("train: empty dataset");
  for (auto i : subset) {
    if (i >= dataset.size()) throw std::out_of_range("train: clip index " + std::to_string(i) + " out of range");
    const auto& c = dataset[i];
    if (c.targets.size() != c.features.frames())
      throw std::invalid_argument("train: clip '" + c.id + "' has targets for a different frame count");
  }
  const TargetView targets(dataset, config.threshold);

  Rng rng(config.seed);
  TrainResult result;

  // Clip-level validation split.
  std::vector<std::size_t> order = subset;
  shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = 0;
  if (config.val_fraction > 0.0 && order.size() >= 2)
    n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(config.val_fraction * order.size())), 1,
                                    order.size() - 1);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> fit(order.begin() + static_cast<long>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(fit.begin(), fit.end());
  result.validation_clips = val;

  double target_sum = 0.0;
  std::size_t target_n = 0;
  for (auto i : fit)
    for (const auto& t : targets.of(i)) {
      target_sum += t.tte_T + t.tse_T;
      target_n += 2;
    }
  ModelWeights weights = build_network(config, rng(), target_n ? target_sum / static_cast<double>(target_n) : 1.0);

  std::vector<std::vector<double>> labels(dataset.size());
  if (config.variant == Variant::baseline)
    for (auto i : fit) labels[i] = frame_labels(dataset[i], config.baseline_label_radius);

  const auto val_refs = frames_of(dataset, val);
  auto samples = frames_of(dataset, fit);
  const std::uint64_t val_seed = rng();
  double best_val = std::numeric_limits<double>::infinity();
  ModelWeights best = weights;

  std::vector<dist::CensoredObservation> tte_obs, tse_obs;
  std::vector<double> batch_labels;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double momentum = nn::momentum_at_epoch(epoch);
    shuffle(samples.begin(), samples.end(), rng);
    const std::size_t count =
        config.frames_per_epoch > 0 ? std::min(config.frames_per_epoch, samples.size()) : samples.size();

    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < count; start += config.batch_size, ++batch_index) {
      const std::size_t b = std::min(config.batch_size, count - start);
      if (b < 2) continue;  // batchnorm needs two samples
      const auto part = std::span<const FrameRef>(samples).subspan(start, b);

      Graph g;
      const auto input = g.constant(gather_chunks(dataset, part));
      const auto out = forward(g, weights, input, Mode::train, rng);
      nn::Var loss;
      if (config.variant == Variant::proposed) {
        tte_obs.clear();
        tse_obs.clear();
        for (const auto& r : part) {
          const auto& t = targets.of(r.clip)[r.frame];
          tte_obs.push_back({t.tte_T, t.tte_u});
          tse_obs.push_back({t.tse_T, t.tse_u});
        }
        loss = nn::add(g, survival_nll(g, out.tte_alpha, out.tte_beta, config.family, tte_obs),
                       survival_nll(g, out.tse_alpha, out.tse_beta, config.family, tse_obs));
      } else {
        batch_labels.clear();
        for (const auto& r : part) batch_labels.push_back(labels[r.clip][r.frame]);
        loss = bce_with_logits(g, out.logit, batch_labels);
      }
      const double value = g.value(loss)[0];
      if (!std::isfinite(value))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));
      g.backward(loss);
      try {
        nn::sgd_step(weights.params, config.lr, momentum);
      } catch (const nn::NonFiniteGradient& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) + ": " +
                            e.what());
      }
      loss_sum += value * static_cast<double>(b);
      loss_n += b;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.momentum = momentum;
    stats.train_loss = loss_n ? loss_sum / static_cast<double>(loss_n) : std::numeric_limits<double>::quiet_NaN();
    stats.val_loss = loss_over(weights, dataset, targets, val_refs, config.val_frames, val_seed);
    weights.metadata["epoch"] = epoch;
    if (val.empty() || stats.val_loss < best_val) {
      best_val = val.empty() ? best_val : stats.val_loss;
      best = weights;
      result.best_epoch = epoch;
    }
    result.trace.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }

  result.weights = std::move(best);
  result.weights.metadata["best_epoch"] = result.best_epoch;
  result.weights.metadata["epochs_run"] = config.epochs;
  return result;
}

std::string trace_csv(const std::vector<EpochStats>& trace) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,train_loss,val_loss,momentum\n";
  for (const auto& s : trace) os << s.epoch << ',' << s.train_loss << ',' << s.val_loss << ',' << s.momentum << '\n';
  return os.str();
}

}  // namespace onsetsurv::model
