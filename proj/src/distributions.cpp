#include "onsetsurv/distributions.hpp"

#include <cmath>
#include <stdexcept>

namespace onsetsurv::dist {

Family family_from_string(std::string_view name) {
  if (name == "loglogistic") return Family::loglogistic;
  if (name == "pareto") return Family::pareto;
  throw std::invalid_argument("unknown distribution family '" + std::string(name) + "'");
}

std::string to_string(Family f) { return f == Family::loglogistic ? "loglogistic" : "pareto"; }

void validate(const DistParams& p) {
  if (!(std::isfinite(p.alpha) && std::isfinite(p.beta) && p.alpha > 0.0 && p.beta > 0.0))
    throw std::invalid_argument("distribution parameters must be finite and positive (alpha=" +
                                std::to_string(p.alpha) + ", beta=" + std::to_string(p.beta) + ")");
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// CDF, its complement and the CDF's partial derivatives at one grid point.
struct Point {
  double F = 0.0;
  double S = 1.0;
  double dF_da = 0.0;
  double dF_db = 0.0;
};

Point evaluate(Family f, const DistParams& p, double x) {
  Point pt;
  if (x <= 0.0) return pt;
  if (f == Family::loglogistic) {
    const double log_ratio = std::log(x) - std::log(p.alpha);
    const double z = p.beta * log_ratio;
    pt.F = sigmoid(z);
    pt.S = sigmoid(-z);
    const double dens = pt.F * pt.S;
    pt.dF_da = -dens * p.beta / p.alpha;
    pt.dF_db = dens * log_ratio;
  } else {
    const double l = std::log1p(x / p.alpha);
    pt.S = std::exp(-p.beta * l);
    pt.F = -std::expm1(-p.beta * l);
    pt.dF_da = -pt.S * p.beta * x / (p.alpha * (p.alpha + x));
    pt.dF_db = pt.S * l;
  }
  return pt;
}

double check_x(double x) {
  if (!(x >= 0.0)) throw std::invalid_argument("distribution evaluated at negative time");
  return x;
}

double mass(const Point& lo, const Point& hi) { return hi.F < 0.5 ? hi.F - lo.F : lo.S - hi.S; }

}  // namespace

double cdf(Family f, const DistParams& p, double x) { return evaluate(f, p, check_x(x)).F; }

double tail(Family f, const DistParams& p, double x) { return evaluate(f, p, check_x(x)).S; }

double pmf(Family f, const DistParams& p, int k) {
  if (k < 0) throw std::invalid_argument("pmf: negative frame count");
  return mass(evaluate(f, p, k), evaluate(f, p, k + 1.0));
}

double survival(Family f, const DistParams& p, int k) {
  if (k < 0) throw std::invalid_argument("survival: negative frame count");
  return evaluate(f, p, k + 1.0).S;
}

double censored_nll(Family f, const DistParams& p, const CensoredObservation& obs) {
  validate(p);
  const double prob = obs.u == 1 ? pmf(f, p, obs.T) : survival(f, p, obs.T);
  return -std::log(std::max(prob, kProbabilityFloor));
}

NllGrad nll_grad(Family f, const DistParams& p, const CensoredObservation& obs) {
  validate(p);
  if (obs.T < 0) throw std::invalid_argument("nll_grad: negative frame count");
  const Point hi = evaluate(f, p, obs.T + 1.0);
  if (obs.u == 1) {
    const Point lo = evaluate(f, p, obs.T);
    const double prob = mass(lo, hi);
    if (prob <= kProbabilityFloor) return {};
    return {-(hi.dF_da - lo.dF_da) / prob, -(hi.dF_db - lo.dF_db) / prob};
  }
  if (hi.S <= kProbabilityFloor) return {};
  // d(-ln S) = dF / S
  return {hi.dF_da / hi.S, hi.dF_db / hi.S};
}

double joint_frame_loss(Family f, const DistParams& tte, const DistParams& tse, const targets::TargetFrame& target) {
  return censored_nll(f, tte, {target.tte_T, target.tte_u}) + censored_nll(f, tse, {target.tse_T, target.tse_u});
}

}  // namespace onsetsurv::dist
