#pragma once

// Stationary profiles of the confined flows and their self-similar dilations:
// compactly supported b(x) = (a - b2 |x|^2)_+^{1/(alpha - 1/2)} for
// alpha > 1/2 and the Gaussian a exp(-capital_lambda |x|^2) at alpha = 1/2,
// normalized to unit mass.

#include "mmflow/model_params.hpp"
#include "mmflow/quantile_state.hpp"

namespace mmflow {

struct BarenblattProfile {
  ModelParameters params;
  bool gaussian = false;    // alpha = 1/2 branch
  double a_norm = 0.0;      // height coefficient
  double b_coeff = 0.0;     // quadratic coefficient (0 on the gaussian branch)
  double exponent = 0.0;    // 1/(alpha - 1/2) on the compact branch
  double support_radius = 0.0;  // +inf on the gaussian branch

  // density at radius r >= 0 (d = 1: r = |x|)
  double evaluate(double r) const;
  // d/dx of the d=1 profile at signed position x
  double derivative(double x) const;
};

// unit-mass stationary profile; requires lambda > 0
BarenblattProfile stationary_profile(const ModelParameters& p);

// quantile sampling of the d=1 profile at midpoint masses
QuantileDensity to_quantile(const BarenblattProfile& b, int n_points);

// zero-confinement self-similar state at time t:
// dilation of the lambda = 1 profile by R(t) = (1 + (delta + 2) t)^{1/(delta+2)}
QuantileDensity self_similar(const ModelParameters& p, double t, int n_points);

double self_similar_radius(const ModelParameters& p, double t);

}  // namespace mmflow
