#pragma once

// Minimizing movement scheme: each step solves
//   min over M of  (1/2 tau) W2(M_prev, M)^2 + Phi[M]
// in quantile coordinates, where Phi is either the fourth-order information
// energy or the second-order entropy, by damped Newton descent on the banded
// Hessian with a monotonicity-preserving backtracking line search.

#include <vector>

#include "mmflow/functionals.hpp"
#include "mmflow/model_params.hpp"
#include "mmflow/quantile_state.hpp"

namespace mmflow {

enum class FunctionalKind { fourth_order, second_order };

struct JkoConfig {
  double inner_grad_tol = 1e-8;  // sup norm stopping threshold, must be > 0
  int inner_max_iter = 500;      // must be >= 50
  double ls_contraction = 0.5;
  double ls_sufficient_decrease = 1e-4;
  int eulerian_grid_size = 512;  // reconstruction resolution for diagnostics
};

void validate(const JkoConfig& cfg);

struct Partition {
  std::vector<double> tau;  // step sizes, all > 0
  std::vector<double> t;    // cumulative times, t[0] = 0, size tau.size() + 1

  int steps() const { return static_cast<int>(tau.size()); }
  double horizon() const { return t.back(); }
};

Partition uniform_partition(double tau, int steps);
Partition geometric_partition(double tau0, double ratio, int steps);

struct JkoStepRecord {
  int n = 0;
  double tau = 0.0;
  double w2sq = 0.0;       // squared step distance
  double f_before = 0.0, f_after = 0.0;
  double h_before = 0.0, h_after = 0.0;
  double logh_before = 0.0, logh_after = 0.0;
  double m2 = 0.0;         // second moment of the new state
  double hess_sn = 0.0;    // hessian seminorm of sigma^n on the diagnostic grid
  int inner_iters = 0;
  double grad_norm = 0.0;  // sup norm of the objective gradient at the solution
  bool floor_hit = false;  // gap floor reached during evaluation
};

// gradient of the step objective at x (exposed for verification)
std::vector<double> objective_gradient(const std::vector<double>& x,
                                       const QuantileDensity& prev, double tau,
                                       FunctionalKind kind,
                                       const ModelParameters& p);

// gradient of the driving functional alone
std::vector<double> functional_gradient(const std::vector<double>& x,
                                        FunctionalKind kind,
                                        const ModelParameters& p);

double functional_value(const QuantileDensity& a, FunctionalKind kind,
                        const ModelParameters& p);

std::pair<QuantileDensity, JkoStepRecord> jko_step(const QuantileDensity& prev,
                                                   double tau,
                                                   FunctionalKind kind,
                                                   const ModelParameters& p,
                                                   const JkoConfig& cfg);

struct Trajectory {
  ModelParameters params;
  FunctionalKind kind = FunctionalKind::fourth_order;
  Partition part;
  JkoConfig cfg;
  std::vector<QuantileDensity> states;  // size steps + 1, states[0] = initial
  std::vector<JkoStepRecord> records;   // size steps
};

Trajectory run_trajectory(const QuantileDensity& initial, const Partition& part,
                          FunctionalKind kind, const ModelParameters& p,
                          const JkoConfig& cfg);

// unconstrained minimizer of the driving functional at resolution n, polished
// from the quantile sampling of the stationary profile; requires lambda > 0
struct DiscreteEquilibrium {
  QuantileDensity state;
  double f_value = 0.0;
  double h_value = 0.0;
  double grad_norm = 0.0;
};

DiscreteEquilibrium equilibrium_state(const ModelParameters& p, int n_points,
                                      FunctionalKind kind,
                                      double grad_tol = 1e-9,
                                      int max_iter = 50000);

}  // namespace mmflow
