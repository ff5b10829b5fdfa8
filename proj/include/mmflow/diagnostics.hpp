#pragma once

// Trajectory ledger: per-step verification of the scheme's structural
// inequalities, decay-rate fits, and distance reports against the discrete
// equilibrium of the running functional.

#include <optional>
#include <string>
#include <vector>

#include "mmflow/barenblatt.hpp"
#include "mmflow/jko.hpp"

namespace mmflow {

// flag encoding used by the ledger csv: 1 pass, 0 fail, -1 not applicable
struct LedgerRow {
  int n = 0;
  double t = 0.0;
  double tau = 0.0;
  double w2sq = 0.0;
  double f = 0.0;
  double h = 0.0;
  double hhat = 0.0;  // h - h at the discrete equilibrium (nan at lambda = 0)
  double fhat = 0.0;
  double logh = 0.0;
  double m2 = 0.0;
  double hess_sn = 0.0;
  int inner_iters = 0;
  double grad_norm = 0.0;
  int flag_eq84 = -1;    // second-moment dilation identity
  int flag_eq78h = -1;   // one-step contraction of hhat
  int flag_eq78f = -1;   // one-step contraction of fhat
  int flag_heatfi = -1;  // heat-flow interchange bound
};

struct LedgerChecks {
  double eq84_max_residual = 0.0;   // relative residual, worst step
  double eq84_slack = 1e-5;
  bool eq84_pass = true;
  int eq78h_violations = 0;         // counted where applicable
  int eq78f_violations = 0;
  bool eq78_applicable = false;
  double heatfi_pass_fraction = 1.0;
  double heatfi_threshold = 0.99;
  bool heatfi_applicable = false;
  double weak_max_excess = 0.0;     // worst test-function residual minus budget
  bool weak_pass = true;
  int energy_violations = 0;        // driving functional must not increase
  int steps = 0;

  bool all_pass() const {
    return eq84_pass && eq78h_violations == 0 && eq78f_violations == 0 &&
           (!heatfi_applicable || heatfi_pass_fraction >= heatfi_threshold) &&
           weak_pass && energy_violations == 0;
  }
};

struct LedgerResult {
  std::vector<LedgerRow> rows;  // size steps + 1, row 0 describes the initial state
  LedgerChecks checks;
};

// reference values for the normalized gaps; absent when lambda = 0
struct EquilibriumRefs {
  bool available = false;
  std::optional<QuantileDensity> state;
  double f_ref = 0.0;
  double h_ref = 0.0;
};

EquilibriumRefs make_equilibrium_refs(const ModelParameters& p, int n_points,
                                      FunctionalKind kind);

// Evaluates every per-step check:
//  - second-moment dilation identity
//      (1 + 2 lambda tau) m2^n + W2^2 = m2^{n-1} - 2 tau D0[M^n]
//    with D0 the zero-confinement dilation derivative of the driving
//    functional, relative residual within eq84_slack;
//  - contraction (1 + c tau) vhat^n <= vhat^{n-1} + 1e-8 (1 + |vhat^0|),
//    c = 2 lambda for the fourth-order flow and c = 2 capital_lambda (the
//    convexity modulus of the entropy) for the second-order flow; both
//    energies are checked on the fourth-order flow, only the entropy on the
//    second-order flow;
//  - heat-flow interchange c0 tau hess_sn <= logH^{n-1} - logH^n
//    + dim lambda tau + 1e-3 (1 + |logH^{n-1}|), fourth-order flow only;
//  - weak-form move consistency for every bank function zeta:
//      |delta int zeta dM + tau sum zeta'(X^n_i) g_i / N| <=
//      (kappa/2) W2^2 + 1e-4 kappa,  g = gradient of the driving functional;
//  - monotonicity of the driving functional.
LedgerResult ledger_check(const Trajectory& traj, const EquilibriumRefs& refs,
                          const std::vector<TestFunction>& bank,
                          double eq84_slack = 1e-5, double eq78_slack = 1e-8,
                          double heatfi_slack = 1e-3, double weak_slack = 1e-4);

std::string ledger_csv_header();
std::string ledger_csv(const LedgerResult& ledger);

struct DecayFit {
  double rate = 0.0;       // v ~ prefactor exp(-rate t)
  double prefactor = 0.0;
  double t_lo = 0.0, t_hi = 0.0;
  int n_used = 0;
};

// least squares of log v against t over samples with v > floor
DecayFit fit_decay_rate(const std::vector<double>& t,
                        const std::vector<double>& v, double floor_value);

struct DistanceReport {
  double l1 = 0.0;        // against the reconstructed equilibrium
  double w2 = 0.0;        // against the equilibrium quantiles
  double hhat = 0.0;
  double fhat = 0.0;
  double ck_ratio = 0.0;  // l1 / sqrt(hhat), 0 when hhat is negligible
  double talagrand_gap = 0.0;  // (capital_lambda/2) w2^2 - hhat, <= 0 expected
  double w12_gap = 0.0;   // alpha = 1 only: sqrt(int (Du - Db)^2)
};

DistanceReport distance_report(const QuantileDensity& state,
                               const BarenblattProfile& b,
                               const ModelParameters& p,
                               const EquilibriumRefs& refs, int grid_size);

// trapezoid integral of |a - ref| over a's grid, with ref linearly
// interpolated onto it and extended by zero
double l1_against(const EulerianDensity& a, const EulerianDensity& ref);

}  // namespace mmflow
