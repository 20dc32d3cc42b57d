#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "onsetsurv/graph.hpp"
#include "onsetsurv/random.hpp"
#include "onsetsurv/tensor.hpp"

namespace onsetsurv::nn {

// ---------------------------------------------------------------------------
// Plain forward kernels. Inputs are channel-last: [H,W,C] for one sample or
// [B,H,W,C] for a batch. Dense accepts [n] or [B,n].
// ---------------------------------------------------------------------------

/// Valid (unpadded) 2-D convolution. kernel is [kh,kw,Cin,Cout], bias [Cout].
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias);

/// Non-overlapping max pooling; trailing rows/columns that do not fill a window are dropped.
Tensor maxpool_forward(const Tensor& input, std::size_t ph, std::size_t pw);

/// input^T W + b with W shaped [n,m].
Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

enum class Activation { relu, tanh, sigmoid, softplus, scaled_sigmoid };

Activation activation_from_string(std::string_view name);
std::string to_string(Activation a);

Tensor activation_forward(const Tensor& input, Activation kind, double gamma = 5.0);

/// Running statistics and affine parameters of one batchnorm layer. Statistics are
/// taken per feature along the last axis, over every other axis.
struct BatchNormState {
  Tensor scale;
  Tensor shift;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.9;
  double eps = 1e-5;
};

/// Train mode normalises with batch statistics and updates the running averages in place.
Tensor batchnorm_forward(const Tensor& batch, BatchNormState& state, Mode mode);

/// Inverted dropout. Infer mode and p == 0 return the input unchanged.
Tensor dropout_forward(const Tensor& input, double p, Mode mode, Rng& rng);

// ---------------------------------------------------------------------------
// Differentiable ops recorded on a Graph. All take batched inputs.
// ---------------------------------------------------------------------------

Var conv2d(Graph& g, Var input, Var kernel, Var bias);
Var maxpool2d(Graph& g, Var input, std::size_t ph, std::size_t pw);
Var flatten(Graph& g, Var input);
Var dense(Graph& g, Var input, Var weights, Var bias);
Var activation(Graph& g, Var input, Activation kind, double gamma = 5.0);

/// scale and shift are graph variables; running statistics live in the store entries
/// named by running_mean / running_var and are updated in train mode.
Var batchnorm(Graph& g, Var input, Var scale, Var shift, Tensor& running_mean, Tensor& running_var, Mode mode,
              double momentum = 0.9, double eps = 1e-5);

Var dropout(Graph& g, Var input, double p, Mode mode, Rng& rng);

/// Columns [begin, end) of a [B,n] matrix.
Var columns(Graph& g, Var input, std::size_t begin, std::size_t end);

/// Mean over all elements, as a [1] tensor.
Var mean(Graph& g, Var input);
Var add(Graph& g, Var a, Var b);

}  // namespace onsetsurv::nn
