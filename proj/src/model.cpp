#include "onsetsurv/model.hpp"

#include <cmath>
#include <stdexcept>

#include "onsetsurv/checkpoint.hpp"
#include "onsetsurv/io.hpp"

namespace onsetsurv::model {

using nn::Graph;
using nn::Mode;
using nn::Tensor;
using nn::Var;

Variant variant_from_string(std::string_view name) {
  if (name == "proposed") return Variant::proposed;
  if (name == "baseline") return Variant::baseline;
  throw std::invalid_argument("unknown model variant '" + std::string(name) + "'");
}

std::string to_string(Variant v) { return v == Variant::proposed ? "proposed" : "baseline"; }

void ModelConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("config: learning rate must be positive");
  if (threshold < 1) throw std::invalid_argument("config: threshold must be >= 1");
  if (!(gamma > 0.0)) throw std::invalid_argument("config: gamma must be positive");
  if (batch_size < 2) throw std::invalid_argument("config: batch size must be >= 2 (batchnorm needs batch statistics)");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("config: dropout must lie in [0, 1)");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::invalid_argument("config: val_fraction must lie in [0, 1)");
  if (baseline_label_radius < 0) throw std::invalid_argument("config: baseline_label_radius must be >= 0");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"family", dist::to_string(c.family)},
          {"threshold", c.threshold},
          {"gamma", c.gamma},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"batch_size", c.batch_size},
          {"dropout", c.dropout},
          {"seed", c.seed},
          {"frames_per_epoch", c.frames_per_epoch},
          {"val_fraction", c.val_fraction},
          {"val_frames", c.val_frames},
          {"baseline_label_radius", c.baseline_label_radius}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.family = dist::family_from_string(j.at("family").get<std::string>());
  c.threshold = j.at("threshold").get<int>();
  c.gamma = j.at("gamma").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.lr = j.at("lr").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.frames_per_epoch = j.value("frames_per_epoch", std::size_t{0});
  c.val_fraction = j.value("val_fraction", 0.1);
  c.val_frames = j.value("val_frames", std::size_t{0});
  c.baseline_label_radius = j.value("baseline_label_radius", 0);
  c.validate();
  return c;
}

std::string config_hash(const ModelConfig& c) { return io::hex64(io::fnv1a64(to_json(c).dump())); }

namespace {

const char* kind_name(LayerSpec::Kind k) {
  switch (k) {
    case LayerSpec::Kind::conv2d:
      return "conv2d";
    case LayerSpec::Kind::maxpool:
      return "maxpool";
    case LayerSpec::Kind::dense:
      return "dense";
    case LayerSpec::Kind::batchnorm:
      return "batchnorm";
    case LayerSpec::Kind::dropout:
      return "dropout";
    case LayerSpec::Kind::activation:
      return "activation";
  }
  return "?";
}

LayerSpec::Kind kind_from_name(const std::string& s) {
  for (auto k : {LayerSpec::Kind::conv2d, LayerSpec::Kind::maxpool, LayerSpec::Kind::dense,
                 LayerSpec::Kind::batchnorm, LayerSpec::Kind::dropout, LayerSpec::Kind::activation})
    if (s == kind_name(k)) return k;
  throw std::invalid_argument("unknown layer kind '" + s + "'");
}

LayerSpec conv(std::string name, std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout) {
  LayerSpec s;
  s.kind = LayerSpec::Kind::conv2d;
  s.name = std::move(name);
  s.kernel_h = kh;
  s.kernel_w = kw;
  s.in_channels = cin;
  s.out_channels = cout;
  return s;
}

LayerSpec pool(std::size_t ph, std::size_t pw) {
  LayerSpec s;
  s.kind = LayerSpec::Kind::maxpool;
  s.pool_h = ph;
  s.pool_w = pw;
  return s;
}

LayerSpec dense_layer(std::string name, std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerSpec::Kind::dense;
  s.name = std::move(name);
  s.units_in = in;
  s.units_out = out;
  return s;
}

LayerSpec norm(std::string name, std::size_t features) {
  LayerSpec s;
  s.kind = LayerSpec::Kind::batchnorm;
  s.name = std::move(name);
  s.features = features;
  return s;
}

LayerSpec drop(double rate) {
  LayerSpec s;
  s.kind = LayerSpec::Kind::dropout;
  s.rate = rate;
  return s;
}

LayerSpec act(nn::Activation a) {
  LayerSpec s;
  s.kind = LayerSpec::Kind::activation;
  s.activation = a;
  return s;
}

void fill_uniform(Tensor& t, double limit, Rng& rng) {
  for (auto& v : t.data()) v = uniform(rng, -limit, limit);
}

double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

// Resolves parameter names to graph leaves: tracked parameters when a mutable store is
// given, constants otherwise.
struct Binder {
  Graph& g;
  nn::ParamStore* tracked;
  const nn::ParamStore& store;

  Var operator()(const std::string& name) const {
    if (tracked) return g.parameter(*tracked, name);
    return g.constant(store.get(name).value);
  }
};

Var apply_layer(Graph& g, const Binder& bind, const LayerSpec& s, Var x, Mode mode, Rng& rng,
                nn::ParamStore* running_store) {
  switch (s.kind) {
    case LayerSpec::Kind::conv2d:
      return nn::conv2d(g, x, bind(s.name + ".kernel"), bind(s.name + ".bias"));
    case LayerSpec::Kind::maxpool:
      return nn::maxpool2d(g, x, s.pool_h, s.pool_w);
    case LayerSpec::Kind::dense:
      if (g.value(x).rank() > 2) x = nn::flatten(g, x);
      return nn::dense(g, x, bind(s.name + ".weight"), bind(s.name + ".bias"));
    case LayerSpec::Kind::batchnorm: {
      auto scale = bind(s.name + ".scale");
      auto shift = bind(s.name + ".shift");
      if (mode == Mode::train) {
        if (!running_store) throw std::logic_error("train-mode forward needs mutable weights");
        return nn::batchnorm(g, x, scale, shift, running_store->get(s.name + ".running_mean").value,
                             running_store->get(s.name + ".running_var").value, mode);
      }
      Tensor rm = bind.store.get(s.name + ".running_mean").value;
      Tensor rv = bind.store.get(s.name + ".running_var").value;
      return nn::batchnorm(g, x, scale, shift, rm, rv, mode);
    }
    case LayerSpec::Kind::dropout:
      return nn::dropout(g, x, s.rate, mode, rng);
    case LayerSpec::Kind::activation:
      return nn::activation(g, x, s.activation, s.gamma);
  }
  throw std::logic_error("unhandled layer kind");
}

Outputs forward_impl(Graph& g, const ModelConfig& cfg, const std::vector<LayerSpec>& trunk, const Binder& bind,
                     nn::ParamStore* mutable_store, Var input, Mode mode, Rng& rng) {
  const Tensor& in = g.value(input);
  if (in.rank() != 4 || in.dim(1) != 15 || in.dim(2) != 80 || in.dim(3) != 3)
    throw std::invalid_argument("model input must be [B,15,80,3], got " + nn::shape_string(in.shape()));
  Var h = input;
  for (const auto& s : trunk) h = apply_layer(g, bind, s, h, mode, rng, mutable_store);

  Outputs out;
  if (cfg.variant == Variant::proposed) {
    // One Dense(10->2) block applied to both halves; both uses share the same leaves.
    const Var w = bind("head.weight");
    const Var b = bind("head.bias");
    auto head = [&](std::size_t begin, Var& alpha, Var& beta) {
      Var half = nn::columns(g, h, begin, begin + 10);
      half = nn::dropout(g, half, cfg.dropout, mode, rng);
      Var raw = nn::dense(g, half, w, b);
      alpha = nn::activation(g, nn::columns(g, raw, 0, 1), nn::Activation::softplus);
      beta = nn::activation(g, nn::columns(g, raw, 1, 2), nn::Activation::scaled_sigmoid, cfg.gamma);
    };
    head(0, out.tte_alpha, out.tte_beta);
    head(10, out.tse_alpha, out.tse_beta);
  } else {
    Var x = nn::dropout(g, h, cfg.dropout, mode, rng);
    x = nn::activation(g, nn::dense(g, x, bind("head1.weight"), bind("head1.bias")), nn::Activation::tanh);
    x = nn::dropout(g, x, cfg.dropout, mode, rng);
    out.logit = nn::dense(g, x, bind("head2.weight"), bind("head2.bias"));
    out.score = nn::activation(g, out.logit, nn::Activation::sigmoid);
  }
  return out;
}

}  // namespace

void LayerSpec::validate() const {
  auto positive = [&](std::size_t v, const char* what) {
    if (v == 0) throw std::invalid_argument(std::string("layer ") + kind_name(kind) + ": " + what + " must be positive");
  };
  switch (kind) {
    case Kind::conv2d:
      positive(kernel_h, "kernel height");
      positive(kernel_w, "kernel width");
      positive(in_channels, "input channels");
      positive(out_channels, "output channels");
      break;
    case Kind::maxpool:
      positive(pool_h, "pool height");
      positive(pool_w, "pool width");
      break;
    case Kind::dense:
      positive(units_in, "input units");
      positive(units_out, "output units");
      break;
    case Kind::batchnorm:
      positive(features, "feature count");
      break;
    case Kind::dropout:
      if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("layer dropout: rate must lie in [0, 1)");
      break;
    case Kind::activation:
      if (!(gamma > 0.0)) throw std::invalid_argument("layer activation: gamma must be positive");
      break;
  }
}

nlohmann::json to_json(const LayerSpec& s) {
  nlohmann::json j = {{"kind", kind_name(s.kind)}};
  if (!s.name.empty()) j["name"] = s.name;
  switch (s.kind) {
    case LayerSpec::Kind::conv2d:
      j["kernel"] = {s.kernel_h, s.kernel_w};
      j["in_channels"] = s.in_channels;
      j["out_channels"] = s.out_channels;
      break;
    case LayerSpec::Kind::maxpool:
      j["pool"] = {s.pool_h, s.pool_w};
      break;
    case LayerSpec::Kind::dense:
      j["units_in"] = s.units_in;
      j["units_out"] = s.units_out;
      break;
    case LayerSpec::Kind::batchnorm:
      j["features"] = s.features;
      break;
    case LayerSpec::Kind::dropout:
      j["rate"] = s.rate;
      break;
    case LayerSpec::Kind::activation:
      j["activation"] = nn::to_string(s.activation);
      if (s.activation == nn::Activation::scaled_sigmoid) j["gamma"] = s.gamma;
      break;
  }
  return j;
}

LayerSpec layer_from_json(const nlohmann::json& j) {
  LayerSpec s;
  s.kind = kind_from_name(j.at("kind").get<std::string>());
  s.name = j.value("name", "");
  switch (s.kind) {
    case LayerSpec::Kind::conv2d:
      s.kernel_h = j.at("kernel").at(0).get<std::size_t>();
      s.kernel_w = j.at("kernel").at(1).get<std::size_t>();
      s.in_channels = j.at("in_channels").get<std::size_t>();
      s.out_channels = j.at("out_channels").get<std::size_t>();
      break;
    case LayerSpec::Kind::maxpool:
      s.pool_h = j.at("pool").at(0).get<std::size_t>();
      s.pool_w = j.at("pool").at(1).get<std::size_t>();
      break;
    case LayerSpec::Kind::dense:
      s.units_in = j.at("units_in").get<std::size_t>();
      s.units_out = j.at("units_out").get<std::size_t>();
      break;
    case LayerSpec::Kind::batchnorm:
      s.features = j.at("features").get<std::size_t>();
      break;
    case LayerSpec::Kind::dropout:
      s.rate = j.at("rate").get<double>();
      break;
    case LayerSpec::Kind::activation:
      s.activation = nn::activation_from_string(j.at("activation").get<std::string>());
      s.gamma = j.value("gamma", 5.0);
      break;
  }
  s.validate();
  return s;
}

std::vector<LayerSpec> trunk_layers(double dropout) {
  return {
      norm("bn_in", 3),
      conv("conv1", 7, 3, 3, 10),
      act(nn::Activation::relu),
      pool(1, 3),
      conv("conv2", 3, 3, 10, 20),
      act(nn::Activation::relu),
      pool(1, 3),
      drop(dropout),
      dense_layer("fc1", 7 * 8 * 20, 256),
      act(nn::Activation::relu),
      drop(dropout),
      dense_layer("fc2", 256, 20),
      act(nn::Activation::tanh),
      norm("bn_out", 20),
  };
}

ModelWeights build_network(const ModelConfig& config, std::uint64_t seed, double mean_target) {
  config.validate();
  ModelWeights w;
  w.config = config;
  w.trunk = trunk_layers(config.dropout);
  Rng rng(seed);

  for (const auto& s : w.trunk) {
    switch (s.kind) {
      case LayerSpec::Kind::batchnorm:
        w.params.add(s.name + ".scale", Tensor({s.features}, 1.0));
        w.params.add(s.name + ".shift", Tensor({s.features}, 0.0));
        w.params.add(s.name + ".running_mean", Tensor({s.features}, 0.0), false);
        w.params.add(s.name + ".running_var", Tensor({s.features}, 1.0), false);
        break;
      case LayerSpec::Kind::conv2d: {
        Tensor k({s.kernel_h, s.kernel_w, s.in_channels, s.out_channels});
        fill_uniform(k, std::sqrt(6.0 / static_cast<double>(s.kernel_h * s.kernel_w * s.in_channels)), rng);
        w.params.add(s.name + ".kernel", std::move(k));
        w.params.add(s.name + ".bias", Tensor({s.out_channels}, 0.0));
        break;
      }
      case LayerSpec::Kind::dense: {
        Tensor m({s.units_in, s.units_out});
        // fc2 feeds tanh: Xavier. Everything else here feeds ReLU: He.
        const double limit = s.name == "fc2" ? std::sqrt(6.0 / static_cast<double>(s.units_in + s.units_out))
                                             : std::sqrt(6.0 / static_cast<double>(s.units_in));
        fill_uniform(m, limit, rng);
        w.params.add(s.name + ".weight", std::move(m));
        w.params.add(s.name + ".bias", Tensor({s.units_out}, 0.0));
        break;
      }
      default:
        break;
    }
  }

  if (config.variant == Variant::proposed) {
    Tensor m({10, 2});
    fill_uniform(m, std::sqrt(6.0 / 12.0), rng);
    w.params.add("head.weight", std::move(m));
    w.params.add("head.bias", Tensor({2}, {inverse_softplus(std::max(mean_target, 1e-3)), 0.0}));
  } else {
    Tensor m1({20, 2});
    fill_uniform(m1, std::sqrt(6.0 / 22.0), rng);
    w.params.add("head1.weight", std::move(m1));
    w.params.add("head1.bias", Tensor({2}, 0.0));
    Tensor m2({2, 1});
    fill_uniform(m2, std::sqrt(6.0 / 3.0), rng);
    w.params.add("head2.weight", std::move(m2));
    w.params.add("head2.bias", Tensor({1}, 0.0));
  }
  w.metadata["config_hash"] = config_hash(config);
  return w;
}

Outputs forward(Graph& g, ModelWeights& w, Var input, Mode mode, Rng& rng) {
  Binder bind{g, &w.params, w.params};
  return forward_impl(g, w.config, w.trunk, bind, &w.params, input, mode, rng);
}

Var survival_nll(Graph& g, Var alpha, Var beta, dist::Family family, std::span<const dist::CensoredObservation> obs) {
  const Tensor& a = g.value(alpha);
  const Tensor& b = g.value(beta);
  if (a.size() != obs.size() || b.size() != obs.size())
    throw std::invalid_argument("survival_nll: " + std::to_string(obs.size()) + " observations for parameters " +
                                nn::shape_string(a.shape()));
  const double n = static_cast<double>(obs.size());
  double total = 0.0;
  std::vector<dist::NllGrad> grads(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const dist::DistParams p{a[i], b[i]};
    total += dist::censored_nll(family, p, obs[i]);
    grads[i] = dist::nll_grad(family, p, obs[i]);
  }
  return g.record(Tensor::scalar(total / n), {alpha, beta},
                  [=, grads = std::move(grads)](Graph& gr, const Tensor& dy) {
                    Tensor& da = gr.grad_slot(alpha);
                    Tensor& db = gr.grad_slot(beta);
                    for (std::size_t i = 0; i < grads.size(); ++i) {
                      da[i] += dy[0] * grads[i].d_alpha / n;
                      db[i] += dy[0] * grads[i].d_beta / n;
                    }
                  });
}

Var bce_with_logits(Graph& g, Var logit, std::span<const double> labels) {
  const Tensor& z = g.value(logit);
  if (z.size() != labels.size()) throw std::invalid_argument("bce: label count does not match logits");
  const double n = static_cast<double>(labels.size());
  double total = 0.0;
  std::vector<double> grad(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double x = z[i], y = labels[i];
    total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    grad[i] = s - y;
  }
  return g.record(Tensor::scalar(total / n), {logit}, [=, grad = std::move(grad)](Graph& gr, const Tensor& dy) {
    Tensor& dz = gr.grad_slot(logit);
    for (std::size_t i = 0; i < grad.size(); ++i) dz[i] += dy[0] * grad[i] / n;
  });
}

namespace {

template <typename Fn>
void for_each_batch(const ModelWeights& w, const Tensor& chunks, std::size_t batch_size, Fn&& fn) {
  if (chunks.rank() != 4 || chunks.dim(1) != 15 || chunks.dim(2) != 80 || chunks.dim(3) != 3)
    throw std::invalid_argument("predict: chunks must be [N,15,80,3], got " + nn::shape_string(chunks.shape()));
  if (batch_size == 0) batch_size = 256;
  const std::size_t n = chunks.dim(0);
  const std::size_t per = 15 * 80 * 3;
  Rng unused(0);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t b = std::min(batch_size, n - start);
    std::vector<double> slice(chunks.raw() + start * per, chunks.raw() + (start + b) * per);
    Graph g;
    Binder bind{g, nullptr, w.params};
    Var in = g.constant(Tensor({b, 15, 80, 3}, std::move(slice)));
    Outputs out = forward_impl(g, w.config, w.trunk, bind, nullptr, in, Mode::infer, unused);
    fn(g, out, start, b);
  }
}

}  // namespace

std::vector<FramePrediction> predict_params(const ModelWeights& w, const Tensor& chunks, std::size_t batch_size) {
  if (w.config.variant != Variant::proposed) throw std::invalid_argument("predict_params needs a proposed-variant model");
  std::vector<FramePrediction> out(chunks.rank() == 4 ? chunks.dim(0) : 0);
  for_each_batch(w, chunks, batch_size, [&](Graph& g, const Outputs& o, std::size_t start, std::size_t b) {
    for (std::size_t i = 0; i < b; ++i) {
      out[start + i].tte = {g.value(o.tte_alpha)[i], g.value(o.tte_beta)[i]};
      out[start + i].tse = {g.value(o.tse_alpha)[i], g.value(o.tse_beta)[i]};
    }
  });
  return out;
}

std::vector<double> predict_scores(const ModelWeights& w, const Tensor& chunks, std::size_t batch_size) {
  if (w.config.variant != Variant::baseline) throw std::invalid_argument("predict_scores needs a baseline model");
  std::vector<double> out(chunks.rank() == 4 ? chunks.dim(0) : 0);
  for_each_batch(w, chunks, batch_size, [&](Graph& g, const Outputs& o, std::size_t start, std::size_t b) {
    for (std::size_t i = 0; i < b; ++i) out[start + i] = g.value(o.score)[i];
  });
  return out;
}

void save_model(const std::filesystem::path& path, const ModelWeights& w) {
  nlohmann::json meta;
  meta["config"] = to_json(w.config);
  meta["trunk"] = nlohmann::json::array();
  for (const auto& s : w.trunk) meta["trunk"].push_back(to_json(s));
  meta["head"] = w.config.variant == Variant::proposed
                     ? nlohmann::json{{"variant", "proposed"},
                                      {"split", 10},
                                      {"tied_dense", {10, 2}},
                                      {"alpha", "softplus"},
                                      {"beta", "scaled_sigmoid"},
                                      {"gamma", w.config.gamma}}
                     : nlohmann::json{{"variant", "baseline"}, {"dense", {{20, 2}, {2, 1}}}, {"activations", {"tanh", "sigmoid"}}};
  meta["metadata"] = w.metadata;
  nn::save_checkpoint(path, w.params, meta);
}

ModelWeights load_model(const std::filesystem::path& path) {
  auto ck = nn::load_checkpoint(path);
  ModelWeights w;
  w.config = config_from_json(ck.meta.at("config"));
  for (const auto& s : ck.meta.at("trunk")) w.trunk.push_back(layer_from_json(s));
  w.params = std::move(ck.params);
  w.metadata = ck.meta.value("metadata", nlohmann::json::object());
  // Guard against checkpoints whose tensors do not fit the declared layers.
  const auto reference = build_network(w.config, 0);
  if (reference.params.size() != w.params.size())
    throw std::runtime_error(path.string() + ": tensor count does not match the declared network");
  for (std::size_t i = 0; i < w.params.size(); ++i) {
    const auto& a = reference.params.at(i);
    const auto& b = w.params.at(i);
    if (a.name != b.name || a.value.shape() != b.value.shape())
      throw std::runtime_error(path.string() + ": tensor '" + b.name + "' does not match the declared network");
  }
  return w;
}

}  // namespace onsetsurv::model
