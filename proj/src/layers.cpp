#include "onsetsurv/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace onsetsurv::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using ConstRowVec = Eigen::Map<const Eigen::RowVectorXd>;

struct Image4 {
  std::size_t B, H, W, C;
  bool batched;
};

Image4 image_dims(const Tensor& t, const char* op) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2), false};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), true};
  throw std::invalid_argument(std::string(op) + ": expected [H,W,C] or [B,H,W,C] input, got " +
                              shape_string(t.shape()));
}

struct ConvGeom {
  std::size_t B, H, W, C, kh, kw, Cout, Ho, Wo;
  std::size_t K() const { return kh * kw * C; }
  std::size_t R() const { return B * Ho * Wo; }
};

ConvGeom conv_geometry(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  const auto d = image_dims(input, "conv2d");
  if (kernel.rank() != 4)
    throw std::invalid_argument("conv2d: kernel must be [kh,kw,Cin,Cout], got " + shape_string(kernel.shape()));
  const auto kh = kernel.dim(0), kw = kernel.dim(1);
  if (kernel.dim(2) != d.C)
    throw std::invalid_argument("conv2d: input " + shape_string(input.shape()) + " does not match kernel " +
                                shape_string(kernel.shape()));
  if (kh > d.H || kw > d.W)
    throw std::invalid_argument("conv2d: kernel " + shape_string(kernel.shape()) + " larger than input " +
                                shape_string(input.shape()));
  if (bias.size() != kernel.dim(3))
    throw std::invalid_argument("conv2d: bias " + shape_string(bias.shape()) + " does not match kernel " +
                                shape_string(kernel.shape()));
  return {d.B, d.H, d.W, d.C, kh, kw, kernel.dim(3), d.H - kh + 1, d.W - kw + 1};
}

// Lowers one image of the batch: each output position becomes one row holding its
// kh x kw x C receptive field. Working per image keeps the buffer cache-resident.
void im2col(const double* in, const ConvGeom& g, std::size_t b, double* cols) {
  const std::size_t span = g.kw * g.C;
  for (std::size_t i = 0; i < g.Ho; ++i)
    for (std::size_t j = 0; j < g.Wo; ++j) {
      double* dst = cols + (i * g.Wo + j) * g.K();
      for (std::size_t di = 0; di < g.kh; ++di) {
        const double* src = in + ((b * g.H + i + di) * g.W + j) * g.C;
        std::copy(src, src + span, dst + di * span);
      }
    }
}

void col2im_add(const double* cols, const ConvGeom& g, std::size_t b, double* din) {
  const std::size_t span = g.kw * g.C;
  for (std::size_t i = 0; i < g.Ho; ++i)
    for (std::size_t j = 0; j < g.Wo; ++j) {
      const double* src = cols + (i * g.Wo + j) * g.K();
      for (std::size_t di = 0; di < g.kh; ++di) {
        double* dst = din + ((b * g.H + i + di) * g.W + j) * g.C;
        for (std::size_t k = 0; k < span; ++k) dst[k] += src[di * span + k];
      }
    }
}

// Accumulates one GEMM per (image row, kernel row); the kw x C window of consecutive
// output columns is a strided view of the input, so nothing is copied.
Tensor conv_apply(const Tensor& input, const ConvGeom& g, const Tensor& kernel, const Tensor& bias) {
  Tensor out(Shape{g.B, g.Ho, g.Wo, g.Cout});
  const std::size_t span = g.kw * g.C;
  ConstMatMap k(kernel.raw(), g.K(), g.Cout);
  const ConstRowVec b(bias.raw(), g.Cout);
  for (std::size_t n = 0; n < g.B; ++n)
    for (std::size_t i = 0; i < g.Ho; ++i) {
      MatMap o(out.raw() + (n * g.Ho + i) * g.Wo * g.Cout, g.Wo, g.Cout);
      o.rowwise() = b;
      for (std::size_t di = 0; di < g.kh; ++di) {
        Eigen::Map<const RowMat, 0, Eigen::OuterStride<>> x(input.raw() + ((n * g.H + i + di) * g.W) * g.C, g.Wo,
                                                            span, Eigen::OuterStride<>(g.C));
        o.noalias() += x * k.middleRows(di * span, span);
      }
    }
  return out;
}

struct PoolGeom {
  std::size_t B, H, W, C, ph, pw, Ho, Wo;
};

PoolGeom pool_geometry(const Tensor& input, std::size_t ph, std::size_t pw) {
  if (ph == 0 || pw == 0) throw std::invalid_argument("maxpool: pool extents must be positive");
  const auto d = image_dims(input, "maxpool");
  if (ph > d.H || pw > d.W)
    throw std::invalid_argument("maxpool: pool " + std::to_string(ph) + "x" + std::to_string(pw) +
                                " larger than input " + shape_string(input.shape()));
  return {d.B, d.H, d.W, d.C, ph, pw, d.H / ph, d.W / pw};
}

// Returns pooled values and, per output cell, the flat input index that won.
Tensor pool_apply(const Tensor& input, const PoolGeom& g, std::vector<std::size_t>* winners) {
  Tensor out(Shape{g.B, g.Ho, g.Wo, g.C});
  if (winners) winners->resize(out.size());
  std::size_t o = 0;
  for (std::size_t b = 0; b < g.B; ++b)
    for (std::size_t i = 0; i < g.Ho; ++i)
      for (std::size_t j = 0; j < g.Wo; ++j)
        for (std::size_t c = 0; c < g.C; ++c, ++o) {
          std::size_t best = ((b * g.H + i * g.ph) * g.W + j * g.pw) * g.C + c;
          for (std::size_t di = 0; di < g.ph; ++di)
            for (std::size_t dj = 0; dj < g.pw; ++dj) {
              const std::size_t idx = ((b * g.H + i * g.ph + di) * g.W + j * g.pw + dj) * g.C + c;
              if (input[idx] > input[best]) best = idx;
            }
          out[o] = input[best];
          if (winners) (*winners)[o] = best;
        }
  return out;
}

struct DenseGeom {
  std::size_t B, n, m;
  bool batched;
};

DenseGeom dense_geometry(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2)
    throw std::invalid_argument("dense: weights must be [n,m], got " + shape_string(weights.shape()));
  DenseGeom g{};
  if (input.rank() == 1) {
    g = {1, input.dim(0), weights.dim(1), false};
  } else if (input.rank() == 2) {
    g = {input.dim(0), input.dim(1), weights.dim(1), true};
  } else {
    throw std::invalid_argument("dense: expected [n] or [B,n] input, got " + shape_string(input.shape()));
  }
  if (g.n != weights.dim(0))
    throw std::invalid_argument("dense: input " + shape_string(input.shape()) + " does not match weights " +
                                shape_string(weights.shape()));
  if (bias.size() != g.m)
    throw std::invalid_argument("dense: bias " + shape_string(bias.shape()) + " does not match weights " +
                                shape_string(weights.shape()));
  return g;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double activate(double x, Activation kind, double gamma) {
  switch (kind) {
    case Activation::relu:
      return x > 0 ? x : 0.0;
    case Activation::tanh:
      return std::tanh(x);
    case Activation::sigmoid:
      return sigmoid(x);
    case Activation::softplus:
      return softplus(x);
    case Activation::scaled_sigmoid:
      return gamma * sigmoid(x);
  }
  return x;
}

// Derivative expressed through the input x and output y.
double activate_grad(double x, double y, Activation kind, double gamma) {
  switch (kind) {
    case Activation::relu:
      return x > 0 ? 1.0 : 0.0;
    case Activation::tanh:
      return 1.0 - y * y;
    case Activation::sigmoid:
      return y * (1.0 - y);
    case Activation::softplus:
      return sigmoid(x);
    case Activation::scaled_sigmoid:
      return y * (1.0 - y / gamma);
  }
  return 1.0;
}

struct NormResult {
  Tensor out;
  Tensor xhat;
  std::vector<double> inv_std;
};

std::size_t feature_count(const Tensor& x, const Tensor& scale) {
  if (x.rank() < 2) throw std::invalid_argument("batchnorm: expected a batched input, got " + shape_string(x.shape()));
  const std::size_t f = x.shape().back();
  if (scale.size() != f)
    throw std::invalid_argument("batchnorm: input " + shape_string(x.shape()) + " does not match scale " +
                                shape_string(scale.shape()));
  return f;
}

NormResult normalize(const Tensor& x, const Tensor& scale, const Tensor& shift, Tensor& running_mean,
                     Tensor& running_var, Mode mode, double momentum, double eps) {
  const std::size_t f = feature_count(x, scale);
  const std::size_t rows = x.size() / f;
  std::vector<double> mu(f, 0.0), var(f, 0.0);
  if (mode == Mode::train) {
    if (x.dim(0) < 2) throw std::invalid_argument("batchnorm: train mode needs a batch of at least 2 samples");
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < f; ++c) mu[c] += x[r * f + c];
    for (auto& m : mu) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < f; ++c) {
        const double d = x[r * f + c] - mu[c];
        var[c] += d * d;
      }
    for (auto& v : var) v /= static_cast<double>(rows);
    const double unbias = static_cast<double>(rows) / static_cast<double>(rows - 1);
    for (std::size_t c = 0; c < f; ++c) {
      running_mean[c] = momentum * running_mean[c] + (1.0 - momentum) * mu[c];
      running_var[c] = momentum * running_var[c] + (1.0 - momentum) * var[c] * unbias;
    }
  } else {
    for (std::size_t c = 0; c < f; ++c) {
      mu[c] = running_mean[c];
      var[c] = running_var[c];
    }
  }
  NormResult res{Tensor(x.shape()), Tensor(x.shape()), std::vector<double>(f)};
  for (std::size_t c = 0; c < f; ++c) res.inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < f; ++c) {
      const std::size_t i = r * f + c;
      res.xhat[i] = (x[i] - mu[c]) * res.inv_std[c];
      res.out[i] = scale[c] * res.xhat[i] + shift[c];
    }
  return res;
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  const auto g = conv_geometry(input, kernel, bias);
  Tensor out = conv_apply(input, g, kernel, bias);
  if (input.rank() == 3) return std::move(out).reshaped({g.Ho, g.Wo, g.Cout});
  return out;
}

Tensor maxpool_forward(const Tensor& input, std::size_t ph, std::size_t pw) {
  const auto g = pool_geometry(input, ph, pw);
  Tensor out = pool_apply(input, g, nullptr);
  if (input.rank() == 3) return std::move(out).reshaped({g.Ho, g.Wo, g.C});
  return out;
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const auto g = dense_geometry(input, weights, bias);
  Tensor out(g.batched ? Shape{g.B, g.m} : Shape{g.m});
  MatMap o(out.raw(), g.B, g.m);
  o.noalias() = ConstMatMap(input.raw(), g.B, g.n) * ConstMatMap(weights.raw(), g.n, g.m);
  o.rowwise() += ConstRowVec(bias.raw(), g.m);
  return out;
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "softplus") return Activation::softplus;
  if (name == "scaled_sigmoid") return Activation::scaled_sigmoid;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::sigmoid:
      return "sigmoid";
    case Activation::softplus:
      return "softplus";
    case Activation::scaled_sigmoid:
      return "scaled_sigmoid";
  }
  return "?";
}

Tensor activation_forward(const Tensor& input, Activation kind, double gamma) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = activate(input[i], kind, gamma);
  return out;
}

Tensor batchnorm_forward(const Tensor& batch, BatchNormState& state, Mode mode) {
  return normalize(batch, state.scale, state.shift, state.running_mean, state.running_var, mode, state.momentum,
                   state.eps)
      .out;
}

Tensor dropout_forward(const Tensor& input, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
  if (mode == Mode::infer || p == 0.0) return input;
  Tensor out(input.shape());
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = uniform01(rng) < p ? 0.0 : input[i] * keep_scale;
  return out;
}

// ---------------------------------------------------------------------------

Var conv2d(Graph& g, Var input, Var kernel, Var bias) {
  const Tensor& x = g.value(input);
  if (x.rank() != 4) throw std::invalid_argument("conv2d: graph op expects [B,H,W,C], got " + shape_string(x.shape()));
  const auto geom = conv_geometry(x, g.value(kernel), g.value(bias));
  Tensor out = conv_apply(x, geom, g.value(kernel), g.value(bias));
  return g.record(std::move(out), {input, kernel, bias}, [=](Graph& gr, const Tensor& dy) {
    const std::size_t rows = geom.Ho * geom.Wo;
    const bool want_k = gr.requires_grad(kernel), want_x = gr.requires_grad(input);
    if (gr.requires_grad(bias)) {
      Tensor& db = gr.grad_slot(bias);
      Eigen::Map<Eigen::RowVectorXd>(db.raw(), geom.Cout) += ConstMatMap(dy.raw(), geom.R(), geom.Cout).colwise().sum();
    }
    if (!want_k && !want_x) return;
    RowMat cols(rows, geom.K());
    ConstMatMap k(gr.value(kernel).raw(), geom.K(), geom.Cout);
    double* dk = want_k ? gr.grad_slot(kernel).raw() : nullptr;
    double* dx = want_x ? gr.grad_slot(input).raw() : nullptr;
    for (std::size_t b = 0; b < geom.B; ++b) {
      ConstMatMap dout(dy.raw() + b * rows * geom.Cout, rows, geom.Cout);
      if (want_k) {
        im2col(gr.value(input).raw(), geom, b, cols.data());
        MatMap(dk, geom.K(), geom.Cout).noalias() += cols.transpose() * dout;
      }
      if (want_x) {
        cols.noalias() = dout * k.transpose();
        col2im_add(cols.data(), geom, b, dx);
      }
    }
  });
}

Var maxpool2d(Graph& g, Var input, std::size_t ph, std::size_t pw) {
  const Tensor& x = g.value(input);
  if (x.rank() != 4) throw std::invalid_argument("maxpool: graph op expects [B,H,W,C], got " + shape_string(x.shape()));
  const auto geom = pool_geometry(x, ph, pw);
  std::vector<std::size_t> winners;
  Tensor out = pool_apply(x, geom, &winners);
  return g.record(std::move(out), {input}, [=, winners = std::move(winners)](Graph& gr, const Tensor& dy) {
    Tensor& dx = gr.grad_slot(input);
    for (std::size_t o = 0; o < winners.size(); ++o) dx[winners[o]] += dy[o];
  });
}

Var flatten(Graph& g, Var input) {
  const Tensor& x = g.value(input);
  const std::size_t b = x.dim(0);
  const Shape original = x.shape();
  return g.record(x.reshaped({b, x.size() / b}), {input},
                  [=](Graph& gr, const Tensor& dy) { gr.accumulate(input, dy.reshaped(original)); });
}

Var dense(Graph& g, Var input, Var weights, Var bias) {
  const Tensor& x = g.value(input);
  if (x.rank() != 2) throw std::invalid_argument("dense: graph op expects [B,n], got " + shape_string(x.shape()));
  const auto geom = dense_geometry(x, g.value(weights), g.value(bias));
  Tensor out = dense_forward(x, g.value(weights), g.value(bias));
  return g.record(std::move(out), {input, weights, bias}, [=](Graph& gr, const Tensor& dy) {
    ConstMatMap dout(dy.raw(), geom.B, geom.m);
    if (gr.requires_grad(weights)) {
      MatMap(gr.grad_slot(weights).raw(), geom.n, geom.m).noalias() +=
          ConstMatMap(gr.value(input).raw(), geom.B, geom.n).transpose() * dout;
    }
    if (gr.requires_grad(bias))
      Eigen::Map<Eigen::RowVectorXd>(gr.grad_slot(bias).raw(), geom.m) += dout.colwise().sum();
    if (gr.requires_grad(input)) {
      MatMap(gr.grad_slot(input).raw(), geom.B, geom.n).noalias() +=
          dout * ConstMatMap(gr.value(weights).raw(), geom.n, geom.m).transpose();
    }
  });
}

Var activation(Graph& g, Var input, Activation kind, double gamma) {
  Tensor out = activation_forward(g.value(input), kind, gamma);
  return g.record(std::move(out), {input}, [=](Graph& gr, const Tensor& dy) {
    const Tensor& x = gr.value(input);
    Tensor& dx = gr.grad_slot(input);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double y = activate(x[i], kind, gamma);
      dx[i] += dy[i] * activate_grad(x[i], y, kind, gamma);
    }
  });
}

Var batchnorm(Graph& g, Var input, Var scale, Var shift, Tensor& running_mean, Tensor& running_var, Mode mode,
              double momentum, double eps) {
  auto res = normalize(g.value(input), g.value(scale), g.value(shift), running_mean, running_var, mode, momentum, eps);
  Tensor out = std::move(res.out);
  return g.record(std::move(out), {input, scale, shift},
                  [=, xhat = std::move(res.xhat), inv_std = std::move(res.inv_std)](Graph& gr, const Tensor& dy) {
                    const std::size_t f = inv_std.size();
                    const std::size_t rows = dy.size() / f;
                    std::vector<double> sum_dy(f, 0.0), sum_dy_xhat(f, 0.0);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < f; ++c) {
                        sum_dy[c] += dy[r * f + c];
                        sum_dy_xhat[c] += dy[r * f + c] * xhat[r * f + c];
                      }
                    if (gr.requires_grad(scale)) {
                      Tensor& ds = gr.grad_slot(scale);
                      for (std::size_t c = 0; c < f; ++c) ds[c] += sum_dy_xhat[c];
                    }
                    if (gr.requires_grad(shift)) {
                      Tensor& dsh = gr.grad_slot(shift);
                      for (std::size_t c = 0; c < f; ++c) dsh[c] += sum_dy[c];
                    }
                    if (!gr.requires_grad(input)) return;
                    const Tensor& gamma = gr.value(scale);
                    Tensor& dx = gr.grad_slot(input);
                    const double n = static_cast<double>(rows);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < f; ++c) {
                        const std::size_t i = r * f + c;
                        if (mode == Mode::train) {
                          dx[i] += gamma[c] * inv_std[c] / n * (n * dy[i] - sum_dy[c] - xhat[i] * sum_dy_xhat[c]);
                        } else {
                          dx[i] += gamma[c] * inv_std[c] * dy[i];
                        }
                      }
                  });
}

Var dropout(Graph& g, Var input, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
  if (mode == Mode::infer || p == 0.0) return input;
  const Tensor& x = g.value(input);
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = uniform01(rng) < p ? 0.0 : keep_scale;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * mask[i];
  return g.record(std::move(out), {input}, [=, mask = std::move(mask)](Graph& gr, const Tensor& dy) {
    Tensor& dx = gr.grad_slot(input);
    for (std::size_t i = 0; i < mask.size(); ++i) dx[i] += dy[i] * mask[i];
  });
}

Var columns(Graph& g, Var input, std::size_t begin, std::size_t end) {
  const Tensor& x = g.value(input);
  if (x.rank() != 2 || begin >= end || end > x.dim(1))
    throw std::invalid_argument("columns: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                                ") for " + shape_string(x.shape()));
  const std::size_t rows = x.dim(0), n = x.dim(1), w = end - begin;
  Tensor out(Shape{rows, w});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = x[r * n + begin + c];
  return g.record(std::move(out), {input}, [=](Graph& gr, const Tensor& dy) {
    Tensor& dx = gr.grad_slot(input);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) dx[r * n + begin + c] += dy[r * w + c];
  });
}

Var mean(Graph& g, Var input) {
  const Tensor& x = g.value(input);
  const double n = static_cast<double>(x.size());
  return g.record(Tensor::scalar(x.sum() / n), {input}, [=](Graph& gr, const Tensor& dy) {
    Tensor& dx = gr.grad_slot(input);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[0] / n;
  });
}

Var add(Graph& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "add");
  Tensor out = g.value(a);
  const Tensor& bv = g.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return g.record(std::move(out), {a, b}, [=](Graph& gr, const Tensor& dy) {
    gr.accumulate(a, dy);
    gr.accumulate(b, dy);
  });
}

}  // namespace onsetsurv::nn
