#pragma once

// Finite-dimensional model of the perturbed-energy construction, the
// Ornstein-Uhlenbeck variance oracle, and the algebraic matrix inequality
// used by the multidimensional estimates.
//
// For a potential V with kappa I <= Hess V <= theta I, the driving energy is
//   U(u) = |grad V(u)|^2 + 2 (theta - kappa) V(u)
// and the flow is u' = -grad U(u).  Along it V decays like exp(-4 kappa theta t)
// and U like exp(-4 min(kappa, theta) theta t).

#include <utility>
#include <vector>

#include "mmflow/model_params.hpp"

namespace mmflow {

enum class PotentialFamily {
  quadratic,  // V = kappa |u|^2 / 2
  perturbed,  // V = kappa |u|^2 / 2 + eps sum u_i^4 / 4
};

struct FinDimProblem {
  int m = 1;  // state dimension
  double kappa = 1.0;
  double theta = 1.0;
  double eps = 0.0;
  PotentialFamily family = PotentialFamily::quadratic;
  std::vector<double> u0;
};

double potential_V(const FinDimProblem& prob, const std::vector<double>& u);
std::vector<double> grad_V(const FinDimProblem& prob,
                           const std::vector<double>& u);
double energy_U(const FinDimProblem& prob, const std::vector<double>& u);
std::vector<double> grad_U(const FinDimProblem& prob,
                           const std::vector<double>& u);

struct FinDimTrajectory {
  std::vector<double> t;
  std::vector<std::vector<double>> u;
};

// classical RK4 on u' = -grad U; throws Blowup when the state escapes
FinDimTrajectory findim_flow(const FinDimProblem& prob, double horizon,
                             double dt);

// max over interior samples of |dV/dt + <grad U, grad V>|
double findim_interchange_residual(const FinDimProblem& prob,
                                   const FinDimTrajectory& traj);

// least-squares decay rates of V and U along the trajectory
std::pair<double, double> findim_decay_rates(const FinDimProblem& prob,
                                             const FinDimTrajectory& traj);

// variance of the second-order flow started from a centered gaussian:
// s(t) = 1/(2 L) + (s0 - 1/(2 L)) exp(-2 L t) for L = capital_lambda > 0,
// s(t) = s0 + t when lambda = 0
double ou_variance_oracle(double sigma0_sq, double t, const ModelParameters& p);

struct MatrixCheckResult {
  double lhs = 0.0;  // (d-1)|A|_F^2 - ((d-1)/d) (tr A)^2
  double rhs = 0.0;  // (1/(d |e|^4)) (d <A e, e> - tr A |e|^2)^2
  bool holds = false;
};

// symmetric A (row major d x d) against direction e
MatrixCheckResult matrix_trace_inequality_check(const std::vector<double>& a,
                                                const std::vector<double>& e,
                                                double slack = 1e-10);

}  // namespace mmflow
