#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "onsetsurv/distributions.hpp"
#include "onsetsurv/graph.hpp"
#include "onsetsurv/random.hpp"
#include "onsetsurv/tensor.hpp"

namespace testing {

using onsetsurv::Rng;
using onsetsurv::nn::Shape;
using onsetsurv::nn::Tensor;

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = onsetsurv::uniform(rng, lo, hi);
  return t;
}

inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradReport {
  double worst = 0.0;
  std::size_t checked = 0;
};

/// Central finite differences of loss() against analytic gradients for up to `samples`
/// coordinates of `value` (all of them when samples is 0). `analytic` holds the gradient
/// computed at the unperturbed value.
inline GradReport check_gradient(Tensor& value, const Tensor& analytic, const std::function<double()>& loss,
                                 double step, std::size_t samples, Rng& rng) {
  GradReport r;
  std::vector<std::size_t> idx(value.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (samples && samples < idx.size()) {
    onsetsurv::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(samples);
  }
  for (auto i : idx) {
    const double orig = value[i];
    value[i] = orig + step;
    const double up = loss();
    value[i] = orig - step;
    const double down = loss();
    value[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    r.worst = std::max(r.worst, rel_error(analytic[i], numeric));
    ++r.checked;
  }
  return r;
}

/// Independent extended-precision censored NLL from the closed-form survival functions.
inline long double oracle_nll(onsetsurv::dist::Family f, long double alpha, long double beta, int T, int u) {
  using onsetsurv::dist::Family;
  // -ln S(x), computed without forming 1 - F
  auto neg_log_s = [&](long double x) -> long double {
    if (x <= 0) return 0;
    if (f == Family::loglogistic) return std::log1p(std::pow(x / alpha, beta));
    return beta * std::log1p(x / alpha);
  };
  const long double hi = neg_log_s(T + 1.0L);
  if (u == 0) return hi;
  const long double lo = neg_log_s(static_cast<long double>(T));
  // pmf = S(T) - S(T+1) = S(T) (1 - exp(lo - hi))
  return lo - std::log(-std::expm1(lo - hi));
}

/// Central differences of oracle_nll with step 1e-6 * parameter.
inline std::pair<double, double> oracle_nll_grad(onsetsurv::dist::Family f, double alpha, double beta, int T, int u) {
  const long double a = alpha, b = beta, ha = 1e-6L * a, hb = 1e-6L * b;
  const long double da = (oracle_nll(f, a + ha, b, T, u) - oracle_nll(f, a - ha, b, T, u)) / (2 * ha);
  const long double db = (oracle_nll(f, a, b + hb, T, u) - oracle_nll(f, a, b - hb, T, u)) / (2 * hb);
  return {static_cast<double>(da), static_cast<double>(db)};
}

}  // namespace testing
