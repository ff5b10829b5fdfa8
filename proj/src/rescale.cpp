#include "mmflow/rescale.hpp"

#include <algorithm>
#include <cmath>

#include "mmflow/barenblatt.hpp"
#include "mmflow/errors.hpp"
#include "mmflow/util.hpp"

namespace mmflow {

RescaledSchedule build_schedule(const Partition& part,
                                const ModelParameters& p) {
  RescaledSchedule sched;
  const int steps = part.steps();
  sched.scale.resize(steps + 1);
  sched.eta.resize(steps);
  sched.s_cum.resize(steps + 1);
  sched.scale[0] = 1.0;
  sched.s_cum[0] = 0.0;
  for (int n = 0; n < steps; ++n) {
    sched.scale[n + 1] = (1.0 + part.tau[n]) * sched.scale[n];
    sched.eta[n] = part.tau[n] * sched.scale[n] *
                   std::pow(sched.scale[n + 1], 1.0 + p.delta);
    sched.s_cum[n + 1] = sched.s_cum[n] + sched.eta[n];
  }
  return sched;
}

double rescaled_time(const RescaledSchedule& sched, const Partition& part,
                     double t) {
  if (t < 0.0 || t > part.horizon() * (1.0 + 1e-12)) {
    throw OutOfRange("time outside the partition");
  }
  const auto it = std::upper_bound(part.t.begin(), part.t.end(), t);
  int n = static_cast<int>(it - part.t.begin()) - 1;
  n = std::clamp(n, 0, part.steps() - 1);
  const double frac = (t - part.t[n]) / part.tau[n];
  return sched.s_cum[n] + frac * sched.eta[n];
}

double minimizer_rescaling_check(const QuantileDensity& prev, double tau,
                                 double scale_before, double scale_after,
                                 const ModelParameters& p,
                                 const JkoConfig& cfg) {
  const double s = scale_before, r = scale_after;
  if (!(s > 0.0) || !(r > 0.0) || !(tau > 0.0)) {
    throw NegativeStep("scales and tau must be positive");
  }
  const double tau_t = tau * s * std::pow(r, 1.0 + p.delta);
  const double lambda_t = (s * (1.0 + p.lambda * tau) - r) / (tau_t * r);
  if (lambda_t < 0.0) {
    throw NegativeConfinement(
        "rescaled confinement is negative; pick scale_after <= scale_before (1 + lambda tau)");
  }
  const ModelParameters p_t = derive_params(p.alpha, lambda_t, p.dim);

  const auto [m, rec] = jko_step(prev, tau, FunctionalKind::fourth_order, p, cfg);
  const auto [m_t, rec_t] = jko_step(dilate(prev, s), tau_t,
                                     FunctionalKind::fourth_order, p_t, cfg);
  (void)rec;
  (void)rec_t;
  return wasserstein_distance(dilate(m, r), m_t);
}

CorrespondenceReport correspondence_run(const QuantileDensity& initial,
                                        const Partition& part,
                                        const ModelParameters& p_confined,
                                        FunctionalKind kind,
                                        const JkoConfig& cfg) {
  if (std::abs(p_confined.lambda - 1.0) > 1e-12) {
    throw OutOfRange("the correspondence is taken at lambda = 1");
  }
  const RescaledSchedule sched = build_schedule(part, p_confined);
  const ModelParameters p_free =
      derive_params(p_confined.alpha, 0.0, p_confined.dim);

  const Trajectory confined =
      run_trajectory(initial, part, kind, p_confined, cfg);
  Partition part_free;
  part_free.tau = sched.eta;
  part_free.t = sched.s_cum;
  const Trajectory free_run =
      run_trajectory(initial, part_free, kind, p_free, cfg);

  CorrespondenceReport rep;
  rep.rows.reserve(part.steps() + 1);
  for (int n = 0; n <= part.steps(); ++n) {
    CorrespondenceRow row;
    row.n = n;
    row.t = part.t[n];
    row.s = sched.s_cum[n];
    row.scale = sched.scale[n];
    row.deviation = wasserstein_distance(
        free_run.states[n], dilate(confined.states[n], sched.scale[n]));
    rep.max_deviation = std::max(rep.max_deviation, row.deviation);
    rep.rows.push_back(row);
  }
  return rep;
}

std::vector<AsymptoticsRow> intermediate_asymptotics_report(
    const Trajectory& traj, const ModelParameters& p, int stride) {
  if (stride < 1) throw OutOfRange("stride must be >= 1");
  const ModelParameters unit = derive_params(p.alpha, 1.0, p.dim);
  const BarenblattProfile prof = stationary_profile(unit);
  const int grid = traj.cfg.eulerian_grid_size;
  const bool with_w12 = std::abs(p.alpha - 1.0) < 1e-12;

  std::vector<int> sample;
  const int last = static_cast<int>(traj.states.size()) - 1;
  for (int n = 0; n <= last; n += stride) sample.push_back(n);
  if (sample.back() != last) sample.push_back(last);

  std::vector<AsymptoticsRow> rows;
  for (int n : sample) {
    const QuantileDensity& st = traj.states[n];
    AsymptoticsRow row;
    row.t = traj.part.t[n];
    row.radius = self_similar_radius(p, row.t);

    const EulerianDensity ue = to_eulerian(st, grid);
    EulerianDensity be = ue;
    for (int j = 0; j < be.size(); ++j) {
      be.u[j] = prof.evaluate(std::abs(be.x(j)) / row.radius) / row.radius;
    }
    row.l1_gap = l1_distance(ue, be);
    row.scaled_gap = row.radius * row.l1_gap;

    if (with_w12) {
      // int (Du - Db_t)^2 dx in particle form: u'(X_i) = -X''/(X')^3 at the
      // interior particles, weighted by X' dm
      const auto& x = st.positions();
      const int N = st.n();
      const double dn = static_cast<double>(N);
      double acc = 0.0;
      for (int i = 1; i + 1 < N; ++i) {
        const double xpc = dn * (x[i + 1] - x[i - 1]) / 2.0;
        const double xpp = dn * dn * (x[i + 1] - 2.0 * x[i] + x[i - 1]);
        const double du = -xpp / (xpc * xpc * xpc);
        const double db = prof.derivative(x[i] / row.radius) /
                          (row.radius * row.radius);
        acc += (du - db) * (du - db) * xpc;
      }
      row.w12_gap = std::sqrt(acc / dn);
      row.scaled_w12_gap =
          std::pow(row.radius, 2.0 + 0.5 * p.dim) * row.w12_gap;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mmflow
