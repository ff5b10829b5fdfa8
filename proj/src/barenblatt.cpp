#include "mmflow/barenblatt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mmflow/errors.hpp"
#include "mmflow/util.hpp"

namespace mmflow {

double BarenblattProfile::evaluate(double r) const {
  if (gaussian) {
    return a_norm * std::exp(-params.capital_lambda * r * r);
  }
  const double core = a_norm - b_coeff * r * r;
  return core > 0.0 ? std::pow(core, exponent) : 0.0;
}

double BarenblattProfile::derivative(double x) const {
  if (gaussian) {
    return -2.0 * params.capital_lambda * x * evaluate(std::abs(x));
  }
  const double core = a_norm - b_coeff * x * x;
  if (core <= 0.0) return 0.0;
  return -2.0 * b_coeff * x * exponent * std::pow(core, exponent - 1.0);
}

BarenblattProfile stationary_profile(const ModelParameters& p) {
  if (!(p.lambda > 0.0)) {
    throw NoStationaryState("no integrable stationary profile at lambda = 0");
  }
  BarenblattProfile b;
  b.params = p;
  if (p.alpha < 0.5 + 1e-6) {
    b.gaussian = true;
    b.a_norm = std::pow(p.capital_lambda / kPi, 0.5 * p.dim);
    b.b_coeff = 0.0;
    b.exponent = 0.0;
    b.support_radius = std::numeric_limits<double>::infinity();
    return b;
  }
  b.gaussian = false;
  b.exponent = 1.0 / (p.alpha - 0.5);
  b.b_coeff = (p.alpha - 0.5) / std::sqrt(2.0 * p.alpha) * p.capital_lambda;
  // unit mass fixes the height in closed form: with e the exponent and
  // b2 the curvature, int (a - b2 |x|^2)_+^e over R^d equals
  // pi^{d/2} a^{e + d/2} b2^{-d/2} Gamma(e + 1) / Gamma(e + 1 + d/2);
  // log space keeps the Gamma ratio finite for exponents up to 1/(alpha-1/2)
  const double e = b.exponent;
  const double hd = 0.5 * p.dim;
  const double log_a = (hd * std::log(b.b_coeff) - hd * std::log(kPi) +
                        std::lgamma(e + 1.0 + hd) - std::lgamma(e + 1.0)) /
                       (e + hd);
  b.a_norm = std::exp(log_a);
  b.support_radius = std::sqrt(b.a_norm / b.b_coeff);
  return b;
}

QuantileDensity to_quantile(const BarenblattProfile& b, int n_points) {
  if (b.params.dim != 1) {
    throw BadDimension("quantile sampling is one-dimensional");
  }
  if (n_points < kMinParticles) {
    throw OutOfRange("need at least " + std::to_string(kMinParticles) +
                     " particles");
  }
  const int N = n_points;
  // upper integration bound: support edge, or a gaussian tail cutoff whose
  // remaining mass is far below the outermost midpoint gap 1/(2N)
  double upper;
  if (b.gaussian) {
    upper = std::sqrt((40.0 + 2.0 * std::log1p(N)) / b.params.capital_lambda);
  } else {
    upper = b.support_radius;
  }

  // cumulative table of the half mass on [0, upper] with per-cell Simpson
  const int M = 1 << 15;
  const double dx = upper / M;
  std::vector<double> cum(M + 1, 0.0);
  for (int j = 0; j < M; ++j) {
    const double x0 = j * dx, x1 = x0 + dx;
    cum[j + 1] = cum[j] + dx / 6.0 *
                              (b.evaluate(x0) + 4.0 * b.evaluate(0.5 * (x0 + x1)) +
                               b.evaluate(x1));
  }

  std::vector<double> q(N);
  const int half_lo = N / 2;  // first index with mass > 1/2
  for (int i = half_lo; i < N; ++i) {
    const double target = (i + 0.5) / N - 0.5;  // mass above the median
    if (target <= 0.0) {
      q[i] = 0.0;
      continue;
    }
    const auto it = std::lower_bound(cum.begin(), cum.end(), target);
    int cell = static_cast<int>(it - cum.begin()) - 1;
    cell = std::max(0, std::min(cell, M - 1));
    double x = cell * dx + 0.5 * dx;
    // Newton refinement against the table base and local Simpson increments
    for (int k = 0; k < 60; ++k) {
      const double x0 = cell * dx;
      const double inc = (x - x0) / 6.0 *
                         (b.evaluate(x0) + 4.0 * b.evaluate(0.5 * (x0 + x)) +
                          b.evaluate(x));
      const double err = cum[cell] + inc - target;
      const double den = b.evaluate(x);
      if (den <= 0.0) break;
      const double step = err / den;
      x -= step;
      x = std::max(x0, std::min(x, (cell + 1.0) * dx));
      if (std::abs(step) < 1e-16 * (1.0 + std::abs(x))) break;
    }
    q[i] = x;
  }
  // mirror the lower half; odd N puts the middle particle exactly at zero
  for (int i = 0; i < half_lo; ++i) q[i] = -q[N - 1 - i];
  if (N % 2 == 1) q[half_lo] = 0.0;
  return QuantileDensity(std::move(q));
}

double self_similar_radius(const ModelParameters& p, double t) {
  if (t < 0.0) throw OutOfRange("self-similar time must be >= 0");
  return std::pow(1.0 + (p.delta + 2.0) * t, 1.0 / (p.delta + 2.0));
}

QuantileDensity self_similar(const ModelParameters& p, double t, int n_points) {
  const ModelParameters unit = derive_params(p.alpha, 1.0, p.dim);
  const QuantileDensity base = to_quantile(stationary_profile(unit), n_points);
  return dilate(base, self_similar_radius(p, t));
}

}  // namespace mmflow
