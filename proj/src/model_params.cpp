#include "mmflow/model_params.hpp"

#include <cmath>

#include "mmflow/errors.hpp"
#include "mmflow/util.hpp"

namespace mmflow {

ModelParameters derive_params(double alpha, double lambda, int dim) {
  if (!std::isfinite(alpha) || alpha < 0.5 || alpha > 1.0) {
    throw OutOfRange("alpha must lie in [1/2, 1], got " + num_str(alpha));
  }
  if (!std::isfinite(lambda) || lambda < 0.0) {
    throw NegativeConfinement("lambda must be >= 0, got " + num_str(lambda));
  }
  if (dim < 1) {
    throw BadDimension("dim must be a positive integer, got " +
                       std::to_string(dim));
  }
  ModelParameters p;
  p.alpha = alpha;
  p.lambda = lambda;
  p.dim = dim;
  p.theta = std::sqrt(2.0 * alpha) / (2.0 * alpha + 1.0);
  p.delta = (2.0 * alpha - 1.0) * dim + 2.0;
  p.capital_lambda = std::sqrt(lambda / p.delta);
  p.beta = (1.0 - alpha) / alpha;
  const double d = static_cast<double>(dim);
  p.c0 = (1.0 / alpha) * (1.0 - p.beta * (d - 1.0) * (d - 1.0) / (d * (d + 2.0)));
  return p;
}

}  // namespace mmflow
