#pragma once

namespace mmflow {

// Derived constants of the (alpha, lambda, dim) model family.
//   theta          = sqrt(2 alpha) / (2 alpha + 1)
//   delta          = (2 alpha - 1) dim + 2
//   capital_lambda = sqrt(lambda / delta)
//   beta           = (1 - alpha) / alpha
//   c0             = (1/alpha) (1 - beta (dim-1)^2 / (dim (dim+2)))
struct ModelParameters {
  double alpha = 0.0;
  double lambda = 0.0;
  int dim = 1;
  double theta = 0.0;
  double capital_lambda = 0.0;
  double delta = 0.0;
  double beta = 0.0;
  double c0 = 0.0;
};

ModelParameters derive_params(double alpha, double lambda, int dim);

}  // namespace mmflow
