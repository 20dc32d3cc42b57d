#pragma once

#include <string>
#include <string_view>

#include "onsetsurv/targets.hpp"

namespace onsetsurv::dist {

enum class Family { loglogistic, pareto };

Family family_from_string(std::string_view name);
std::string to_string(Family f);

/// Scale alpha (frames) and shape beta of a two-parameter event-time distribution.
struct DistParams {
  double alpha = 1.0;
  double beta = 1.0;
};

/// Throws std::invalid_argument unless both parameters are finite and positive.
void validate(const DistParams& p);

/// Continuous CDF on x >= 0.
///   loglogistic: F(x) = 1 / (1 + (x/alpha)^-beta)
///   pareto (Lomax, support from 0): F(x) = 1 - (1 + x/alpha)^-beta
double cdf(Family f, const DistParams& p, double x);

/// 1 - cdf, computed without cancellation.
double tail(Family f, const DistParams& p, double x);

/// Probability of an event exactly k frames away: F(k+1) - F(k).
double pmf(Family f, const DistParams& p, int k);

/// Probability of an event strictly after frame k: 1 - F(k+1).
double survival(Family f, const DistParams& p, int k);

inline constexpr double kProbabilityFloor = 1e-12;

struct CensoredObservation {
  int T = 0;
  int u = 1;
};

/// -ln pmf(T) for u = 1, -ln survival(T) for u = 0, probabilities floored at 1e-12.
double censored_nll(Family f, const DistParams& p, const CensoredObservation& obs);

struct NllGrad {
  double d_alpha = 0.0;
  double d_beta = 0.0;
};

/// Closed-form partial derivatives of censored_nll. Zero where the floor is active.
NllGrad nll_grad(Family f, const DistParams& p, const CensoredObservation& obs);

/// TTE loss plus TSE loss with unit weights.
double joint_frame_loss(Family f, const DistParams& tte, const DistParams& tse, const targets::TargetFrame& target);

}  // namespace onsetsurv::dist
