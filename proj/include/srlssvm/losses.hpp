#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "srlssvm/errors.hpp"

namespace srlssvm {

/// Truncation level tau and smoothing sharpness p.
struct LossParams {
  double tau = 1.0;
  double p = 1e4;

  void validate() const {
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw InvalidInput("tau must be >= 0");
    if (!(p > 0.0) || !std::isfinite(p)) throw InvalidInput("p must be > 0");
  }
};

inline double squared_loss(double xi) { return 0.5 * xi * xi; }

/// 1/2 min(tau^2, xi^2)
inline double truncated_loss(double xi, double tau) {
  return std::abs(xi) <= tau ? 0.5 * xi * xi : 0.5 * tau * tau;
}

/// Convex part subtracted from the squared loss: squared_loss - l2_part = truncated_loss.
inline double l2_part(double xi, double tau) {
  return std::abs(xi) <= tau ? 0.0 : 0.5 * (xi * xi - tau * tau);
}

/// Entropy-smoothed l2_part. Equals softplus(p u) / (2p) with u = xi^2 - tau^2,
/// written so that exp() only ever sees a nonpositive argument.
inline double smoothed_l2(double xi, const LossParams& lp) {
  const double u = xi * xi - lp.tau * lp.tau;
  return 0.5 * std::max(0.0, u) + std::log1p(std::exp(-lp.p * std::abs(u))) / (2.0 * lp.p);
}

inline double smoothed_l2_grad(double xi, const LossParams& lp) {
  const double u = xi * xi - lp.tau * lp.tau;
  return xi * std::exp(std::min(0.0, lp.p * u)) / (1.0 + std::exp(-lp.p * std::abs(u)));
}

/// CCCP linearization coefficient: ~0 for |xi| < tau, ~xi for |xi| > tau.
inline double gamma(double xi, const LossParams& lp) { return smoothed_l2_grad(xi, lp); }

/// Smoothed truncated loss, squared_loss - smoothed_l2.
inline double smoothed_truncated_loss(double xi, const LossParams& lp) {
  return squared_loss(xi) - smoothed_l2(xi, lp);
}

/// Optimal re-weighting: 1 inside the tube (boundary included), 0 outside.
inline double weight(double xi, double tau) { return std::abs(xi) <= tau ? 1.0 : 0.0; }

/// Penalty on the re-weighting variable, tau^2/2 (1 - w)_+.
inline double weight_penalty(double w, double tau) {
  return 0.5 * tau * tau * std::max(0.0, 1.0 - w);
}

/// Checks that min over w in {0, 1} of w xi^2 / 2 + penalty(w) reproduces the
/// truncated loss exactly at every grid point. The objective is piecewise
/// linear in w on [0, 1] and increasing beyond, so {0, 1} suffices.
inline bool reweighted_identity_check(std::span<const double> xi_grid, double tau) {
  for (double xi : xi_grid) {
    const double at0 = weight_penalty(0.0, tau);
    const double at1 = 0.5 * xi * xi + weight_penalty(1.0, tau);
    if (std::min(at0, at1) != truncated_loss(xi, tau)) return false;
  }
  return true;
}

}  // namespace srlssvm
