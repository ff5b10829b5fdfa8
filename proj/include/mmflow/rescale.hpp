#pragma once

// Discrete change of variables between the confined scheme and the
// zero-confinement scheme: scale factors S^n = prod (1 + tau_k), rescaled
// step sizes eta_n = tau_n S^{n-1} (S^n)^{1+delta}, and the per-step
// minimizer correspondence  M-tilde^n = dilate(M^n, S^n).

#include <vector>

#include "mmflow/jko.hpp"
#include "mmflow/model_params.hpp"
#include "mmflow/quantile_state.hpp"

namespace mmflow {

struct RescaledSchedule {
  std::vector<double> scale;    // S^n, size steps + 1, scale[0] = 1
  std::vector<double> eta;      // rescaled step sizes, size steps
  std::vector<double> s_cum;    // rescaled cumulative times, size steps + 1
};

// requires lambda = 1 semantics: S^n = (1 + tau_n) S^{n-1}
RescaledSchedule build_schedule(const Partition& part, const ModelParameters& p);

// piecewise-linear rescaled time s = L(t) induced by the schedule
double rescaled_time(const RescaledSchedule& sched, const Partition& part,
                     double t);

// One-step check: with M = argmin of the tau step from prev and
// M-tilde = argmin of the (tau-tilde, lambda-tilde) step from dilate(prev, S),
// returns W2(dilate(M, R), M-tilde).  tau-tilde = tau S R^{1+delta},
// lambda-tilde = (S (1 + lambda tau) - R) / (tau-tilde R).
double minimizer_rescaling_check(const QuantileDensity& prev, double tau,
                                 double scale_before, double scale_after,
                                 const ModelParameters& p,
                                 const JkoConfig& cfg);

struct CorrespondenceRow {
  int n = 0;
  double t = 0.0;       // confined time
  double s = 0.0;       // rescaled time
  double scale = 0.0;   // S^n
  double deviation = 0.0;  // W2(tilde state, dilated confined state)
};

struct CorrespondenceReport {
  std::vector<CorrespondenceRow> rows;
  double max_deviation = 0.0;
};

// runs the confined (lambda = 1) scheme and the rescaled zero-confinement
// scheme from the same initial state and compares them step by step
CorrespondenceReport correspondence_run(const QuantileDensity& initial,
                                        const Partition& part,
                                        const ModelParameters& p_confined,
                                        FunctionalKind kind,
                                        const JkoConfig& cfg);

struct AsymptoticsRow {
  double t = 0.0;
  double radius = 0.0;      // R(t)
  double l1_gap = 0.0;      // distance to the self-similar profile
  double scaled_gap = 0.0;  // R(t) * l1_gap
  double w12_gap = 0.0;     // sqrt(int (Du - Db_t)^2), alpha = 1 only
  double scaled_w12_gap = 0.0;  // R(t)^{2 + d/2} * w12_gap
};

// zero-confinement trajectory against the dilated stationary profile,
// sampled every `stride` steps; w12 columns are filled for alpha = 1
std::vector<AsymptoticsRow> intermediate_asymptotics_report(
    const Trajectory& traj, const ModelParameters& p, int stride);

}  // namespace mmflow
