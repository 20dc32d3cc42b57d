#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "onsetsurv/distributions.hpp"
#include "onsetsurv/graph.hpp"
#include "onsetsurv/layers.hpp"
#include "onsetsurv/random.hpp"

namespace onsetsurv::model {

enum class Variant { proposed, baseline };

Variant variant_from_string(std::string_view name);
std::string to_string(Variant v);

struct ModelConfig {
  Variant variant = Variant::proposed;
  dist::Family family = dist::Family::loglogistic;
  int threshold = 10;  // frames, shared by TTE and TSE
  double gamma = 5.0;
  int epochs = 300;
  double lr = 0.001;
  std::size_t batch_size = 256;
  double dropout = 0.5;
  std::uint64_t seed = 1;
  /// Frames drawn (without replacement) per epoch; 0 uses every training frame.
  std::size_t frames_per_epoch = 0;
  /// Share of training clips held out for best-epoch selection.
  double val_fraction = 0.1;
  /// Cap on validation frames scored per epoch; 0 scores all of them.
  std::size_t val_frames = 0;
  /// Baseline labels: frames within this many frames of an onset count as positive.
  int baseline_label_radius = 0;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);
/// FNV-1a of the canonical JSON form.
std::string config_hash(const ModelConfig& c);

struct LayerSpec {
  enum class Kind { conv2d, maxpool, dense, batchnorm, dropout, activation };
  Kind kind = Kind::activation;
  std::string name;  // parameter prefix for layers that own parameters
  std::size_t kernel_h = 0, kernel_w = 0, in_channels = 0, out_channels = 0;
  std::size_t pool_h = 0, pool_w = 0;
  std::size_t units_in = 0, units_out = 0;
  std::size_t features = 0;  // batchnorm width
  double rate = 0.0;
  nn::Activation activation = nn::Activation::relu;
  double gamma = 5.0;

  void validate() const;
};

nlohmann::json to_json(const LayerSpec& s);
LayerSpec layer_from_json(const nlohmann::json& j);

/// Shared convolutional trunk: [B,15,80,3] -> [B,20].
std::vector<LayerSpec> trunk_layers(double dropout);

/// Parameters plus the recipe that produced them. Frozen weights are safe to share for
/// inference across threads as long as nobody runs a train-mode forward on them.
struct ModelWeights {
  ModelConfig config;
  std::vector<LayerSpec> trunk;
  nn::ParamStore params;
  nlohmann::json metadata = nlohmann::json::object();  // epoch, fold, config_hash, ...
};

/// Builds the network for config.variant with freshly initialised parameters.
/// mean_target sets the scale head's bias so the initial alpha equals it (proposed only).
ModelWeights build_network(const ModelConfig& config, std::uint64_t seed, double mean_target = 5.0);

inline constexpr std::size_t kProposedParameterCount = 294644;
inline constexpr std::size_t kBaselineParameterCount = 294667;

struct Outputs {
  // proposed
  nn::Var tte_alpha, tte_beta, tse_alpha, tse_beta;
  // baseline
  nn::Var logit, score;
};

/// Records a forward pass of a [B,15,80,3] batch.
Outputs forward(nn::Graph& g, ModelWeights& w, nn::Var input, nn::Mode mode, Rng& rng);

/// Mean censored negative log-likelihood over the batch. alpha/beta are [B,1].
nn::Var survival_nll(nn::Graph& g, nn::Var alpha, nn::Var beta, dist::Family family,
                     std::span<const dist::CensoredObservation> obs);

/// Mean binary cross-entropy computed from logits. logit is [B,1].
nn::Var bce_with_logits(nn::Graph& g, nn::Var logit, std::span<const double> labels);

struct FramePrediction {
  dist::DistParams tte;
  dist::DistParams tse;
};

/// Inference-mode outputs for a [N,15,80,3] tensor, evaluated in batches.
std::vector<FramePrediction> predict_params(const ModelWeights& w, const nn::Tensor& chunks,
                                            std::size_t batch_size = 256);
std::vector<double> predict_scores(const ModelWeights& w, const nn::Tensor& chunks, std::size_t batch_size = 256);

void save_model(const std::filesystem::path& path, const ModelWeights& w);
ModelWeights load_model(const std::filesystem::path& path);

}  // namespace onsetsurv::model
