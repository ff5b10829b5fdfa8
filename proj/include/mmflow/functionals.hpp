#pragma once

// Discrete energies of the flow family on quantile states (d = 1):
//
//   information F_{alpha,lambda} = (1/2alpha) int |D u^alpha|^2 + (lambda/2) m2
//   entropy     H_{alpha,lambda} = theta/(alpha-1/2) (int u^{alpha+1/2} - 1)
//                                  + (capital_lambda/2) m2          (alpha > 1/2)
//                                = (1/2) int u log u + (capital_lambda/2) m2
//                                                                    (alpha = 1/2)
//
// In quantile coordinates X(m), with X' = dX/dm evaluated at half nodes
// X'_{i+1/2} = N (X_{i+1} - X_i), the density is u = 1/X' and
//   int u^{alpha+1/2} dx = (1/N) sum (X'_{i+1/2})^{1/2-alpha}
//   int u log u dx       = -(1/N) sum log X'_{i+1/2}
//   int |D u^alpha|^2 dx = (1/N) sum (D w_i)^2 / X'_i,  w = (X')^{-alpha}
// with centered differences at interior nodes and one-sided copies at the
// two boundary nodes.

#include <functional>
#include <string>
#include <vector>

#include "mmflow/model_params.hpp"
#include "mmflow/quantile_state.hpp"

namespace mmflow {

double information(const QuantileDensity& a, const ModelParameters& p);
double entropy(const QuantileDensity& a, const ModelParameters& p);

// full Boltzmann entropy int u log u
double log_entropy(const QuantileDensity& a);

// metric slope identity of the entropy along the family:
// |grad H|^2 = F - (delta - 2) capital_lambda H - 2 dim theta capital_lambda
double entropy_slope_squared(const QuantileDensity& a, const ModelParameters& p);

// d/dr F_{alpha,lambda}[dilate(a, r)] at r = 1 = -delta F_{alpha,0} + lambda m2
double dilation_derivative(const QuantileDensity& a, const ModelParameters& p);

// scalar test function with exact derivatives and a declared curvature bound
struct TestFunction {
  std::string id;
  double kappa = 0.0;  // upper bound for sup |f''|
  std::function<double(double)> f, d1, d2, d3;
};

// compactly supported (1 - ((x-c)/a)^2)^4 bump
TestFunction polynomial_bump(double a, double center);
// x^2/2 inside |x| <= r, smoothly flattened to a constant across [r, r+s]
TestFunction truncated_quadratic(double r, double s);
// x^3/6 inside |x| <= r, flattened the same way (odd function)
TestFunction truncated_cubic(double r, double s);
// sin(k x) under a (1 - (x/a)^2)^4 window
TestFunction windowed_wave(double a, double k);

// the five functions used by the trajectory ledger
std::vector<TestFunction> standard_test_bank();

// Eulerian weak form of the fourth-order operator against zeta:
// N = -(1/2alpha) int [ alpha (sigma^2)' zeta''' + (2alpha+1) (sigma')^2 zeta'' ],
// sigma = u^alpha.  Equals d/ds F_{alpha,0}[(id + s zeta')_# u] at s = 0.
double weak_operator_N(const EulerianDensity& u, const ModelParameters& p,
                       const TestFunction& zeta);

// int (d^2/dx^2 u^alpha)^2 by central second differences
double hessian_seminorm(const EulerianDensity& u, double alpha);

// trapezoid-rule information energy of a gridded density (cross-check)
double information_eulerian(const EulerianDensity& u, const ModelParameters& p);

namespace detail {

// value and (optionally) gradient of the discrete energies as functions of the
// raw position vector; gaps are floored at g_min for evaluation and the flag
// reports whether the floor was hit
double information_value_grad(const std::vector<double>& x,
                              const ModelParameters& p,
                              std::vector<double>* grad,
                              bool* floored = nullptr);
double entropy_value_grad(const std::vector<double>& x,
                          const ModelParameters& p, std::vector<double>* grad,
                          bool* floored = nullptr);
double log_entropy_raw(const std::vector<double>& x);

// d/dr of the zero-confinement part along dilation r X at r = 1
double unconfined_dilation_derivative(const std::vector<double>& x,
                                      const ModelParameters& p,
                                      bool second_order);

}  // namespace detail

}  // namespace mmflow
