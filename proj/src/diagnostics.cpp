#include "mmflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mmflow/errors.hpp"
#include "mmflow/util.hpp"

namespace mmflow {

EquilibriumRefs make_equilibrium_refs(const ModelParameters& p, int n_points,
                                      FunctionalKind kind) {
  EquilibriumRefs refs;
  if (!(p.lambda > 0.0)) return refs;
  DiscreteEquilibrium eq = equilibrium_state(p, n_points, kind);
  refs.available = true;
  refs.f_ref = eq.f_value;
  refs.h_ref = eq.h_value;
  refs.state = std::move(eq.state);
  return refs;
}

LedgerResult ledger_check(const Trajectory& traj, const EquilibriumRefs& refs,
                          const std::vector<TestFunction>& bank,
                          double eq84_slack, double eq78_slack,
                          double heatfi_slack, double weak_slack) {
  const ModelParameters& p = traj.params;
  const bool fourth = traj.kind == FunctionalKind::fourth_order;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const int steps = static_cast<int>(traj.records.size());

  LedgerResult out;
  out.checks.steps = steps;
  out.checks.eq84_slack = eq84_slack;
  out.checks.eq78_applicable = refs.available;
  out.checks.heatfi_applicable = fourth;
  out.rows.reserve(steps + 1);

  auto hat_h = [&](double h) { return refs.available ? h - refs.h_ref : nan; };
  auto hat_f = [&](double f) { return refs.available ? f - refs.f_ref : nan; };

  // initial row
  {
    const QuantileDensity& st = traj.states[0];
    LedgerRow row;
    row.n = 0;
    row.t = traj.part.t[0];
    row.f = information(st, p);
    row.h = entropy(st, p);
    row.hhat = hat_h(row.h);
    row.fhat = hat_f(row.f);
    row.logh = log_entropy(st);
    row.m2 = second_moment(st);
    row.hess_sn =
        hessian_seminorm(to_eulerian(st, traj.cfg.eulerian_grid_size), p.alpha);
    out.rows.push_back(row);
  }

  const double hhat0 = out.rows[0].hhat;
  const double fhat0 = out.rows[0].fhat;
  const double contraction_rate =
      fourth ? 2.0 * p.lambda : 2.0 * p.capital_lambda;

  int heatfi_passes = 0;
  for (int k = 0; k < steps; ++k) {
    const JkoStepRecord& rec = traj.records[k];
    const QuantileDensity& st = traj.states[k + 1];
    LedgerRow row;
    row.n = rec.n;
    row.t = traj.part.t[k + 1];
    row.tau = rec.tau;
    row.w2sq = rec.w2sq;
    row.f = rec.f_after;
    row.h = rec.h_after;
    row.hhat = hat_h(rec.h_after);
    row.fhat = hat_f(rec.f_after);
    row.logh = rec.logh_after;
    row.m2 = rec.m2;
    row.hess_sn = rec.hess_sn;
    row.inner_iters = rec.inner_iters;
    row.grad_norm = rec.grad_norm;

    const double m2_prev = (k == 0) ? out.rows[0].m2 : traj.records[k - 1].m2;

    // second-moment dilation identity; the confinement coefficient belongs
    // to the driving functional
    {
      const double d0 = detail::unconfined_dilation_derivative(
          st.positions(), p, !fourth);
      const double conf = fourth ? p.lambda : p.capital_lambda;
      const double lhs = (1.0 + 2.0 * conf * rec.tau) * row.m2 + rec.w2sq;
      const double rhs = m2_prev - 2.0 * rec.tau * d0;
      const double resid = std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs));
      out.checks.eq84_max_residual =
          std::max(out.checks.eq84_max_residual, resid);
      row.flag_eq84 = resid <= eq84_slack ? 1 : 0;
      if (row.flag_eq84 == 0) out.checks.eq84_pass = false;
    }

    // one-step contraction of the normalized energies
    if (refs.available) {
      const double h_prev = hat_h(rec.h_before);
      const double lhs_h = (1.0 + contraction_rate * rec.tau) * row.hhat;
      row.flag_eq78h =
          lhs_h <= h_prev + eq78_slack * (1.0 + std::abs(hhat0)) ? 1 : 0;
      if (row.flag_eq78h == 0) ++out.checks.eq78h_violations;
      if (fourth) {
        const double f_prev = hat_f(rec.f_before);
        const double lhs_f = (1.0 + contraction_rate * rec.tau) * row.fhat;
        row.flag_eq78f =
            lhs_f <= f_prev + eq78_slack * (1.0 + std::abs(fhat0)) ? 1 : 0;
        if (row.flag_eq78f == 0) ++out.checks.eq78f_violations;
      }
    }

    // heat-flow interchange
    if (fourth) {
      const double lhs = p.c0 * rec.tau * rec.hess_sn;
      const double rhs = rec.logh_before - rec.logh_after +
                         p.dim * p.lambda * rec.tau +
                         heatfi_slack * (1.0 + std::abs(rec.logh_before));
      row.flag_heatfi = lhs <= rhs ? 1 : 0;
      if (row.flag_heatfi == 1) ++heatfi_passes;
    }

    // weak-form move consistency against the bank
    if (!bank.empty()) {
      const auto& xn = st.positions();
      const auto& xp = traj.states[k].positions();
      const std::vector<double> g =
          functional_gradient(xn, traj.kind, p);
      const double inv_n = 1.0 / static_cast<double>(st.n());
      for (const TestFunction& zeta : bank) {
        double dzeta = 0.0, first_var = 0.0;
        for (int i = 0; i < st.n(); ++i) {
          dzeta += zeta.f(xn[i]) - zeta.f(xp[i]);
          first_var += zeta.d1(xn[i]) * g[i];
        }
        dzeta *= inv_n;
        const double resid = std::abs(dzeta + rec.tau * first_var);
        const double budget =
            0.5 * zeta.kappa * rec.w2sq + weak_slack * zeta.kappa;
        out.checks.weak_max_excess =
            std::max(out.checks.weak_max_excess, resid - budget);
        if (resid > budget) out.checks.weak_pass = false;
      }
    }

    // the driving functional must not increase
    const double v_before = fourth ? rec.f_before : rec.h_before;
    const double v_after = fourth ? rec.f_after : rec.h_after;
    if (v_after > v_before + 1e-12 * (1.0 + std::abs(v_before))) {
      ++out.checks.energy_violations;
    }

    out.rows.push_back(row);
  }
  if (fourth && steps > 0) {
    out.checks.heatfi_pass_fraction =
        static_cast<double>(heatfi_passes) / steps;
  }
  return out;
}

std::string ledger_csv_header() {
  return "n,t,tau,W2sq,F,H,Hhat,Fhat,logH,M2,hess_sn,inner_iters,grad_norm,"
         "flag_eq84,flag_eq78H,flag_eq78F,flag_heatFI\n";
}

std::string ledger_csv(const LedgerResult& ledger) {
  std::string out = ledger_csv_header();
  for (const LedgerRow& r : ledger.rows) {
    out += csv_row({std::to_string(r.n), num_str(r.t), num_str(r.tau),
                    num_str(r.w2sq), num_str(r.f), num_str(r.h),
                    num_str(r.hhat), num_str(r.fhat), num_str(r.logh),
                    num_str(r.m2), num_str(r.hess_sn),
                    std::to_string(r.inner_iters), num_str(r.grad_norm),
                    std::to_string(r.flag_eq84), std::to_string(r.flag_eq78h),
                    std::to_string(r.flag_eq78f),
                    std::to_string(r.flag_heatfi)});
  }
  return out;
}

DecayFit fit_decay_rate(const std::vector<double>& t,
                        const std::vector<double>& v, double floor_value) {
  if (t.size() != v.size()) {
    throw MismatchedResolution("time and value series must have equal length");
  }
  std::vector<double> ts, lv;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (v[k] > floor_value && v[k] > 0.0) {
      ts.push_back(t[k]);
      lv.push_back(std::log(v[k]));
    }
  }
  if (ts.size() < 10) {
    throw InsufficientSignal("fewer than 10 samples above the floor " +
                             num_str(floor_value));
  }
  const auto [slope, intercept] = linear_fit(ts, lv);
  DecayFit fit;
  fit.rate = -slope;
  fit.prefactor = std::exp(intercept);
  fit.t_lo = ts.front();
  fit.t_hi = ts.back();
  fit.n_used = static_cast<int>(ts.size());
  return fit;
}

double l1_against(const EulerianDensity& a, const EulerianDensity& ref) {
  double acc = 0.0;
  for (int j = 0; j < a.size(); ++j) {
    const double x = a.x(j);
    double rv = 0.0;
    const double pos = (x - ref.lo) / ref.h;
    if (pos >= 0.0 && pos <= ref.size() - 1) {
      const int c = std::min(static_cast<int>(pos), ref.size() - 2);
      const double fr = pos - c;
      rv = ref.u[c] * (1.0 - fr) + ref.u[c + 1] * fr;
    }
    const double w = (j == 0 || j == a.size() - 1) ? 0.5 : 1.0;
    acc += w * std::abs(a.u[j] - rv);
  }
  return acc * a.h;
}

DistanceReport distance_report(const QuantileDensity& state,
                               const BarenblattProfile& b,
                               const ModelParameters& p,
                               const EquilibriumRefs& refs, int grid_size) {
  DistanceReport rep;
  const EulerianDensity ue = to_eulerian(state, grid_size);
  if (refs.available) {
    rep.w2 = wasserstein_distance(state, *refs.state);
    rep.hhat = entropy(state, p) - refs.h_ref;
    rep.fhat = information(state, p) - refs.f_ref;
    // reconstruct the equilibrium and compare on the state's grid
    rep.l1 = l1_against(ue, to_eulerian(*refs.state, grid_size));
    const double hh = std::max(rep.hhat, 0.0);
    rep.ck_ratio = hh > 1e-14 ? rep.l1 / std::sqrt(hh) : 0.0;
    rep.talagrand_gap = 0.5 * p.capital_lambda * rep.w2 * rep.w2 - rep.hhat;
  } else {
    double acc = 0.0;
    for (int j = 0; j < ue.size(); ++j) {
      const double w = (j == 0 || j == ue.size() - 1) ? 0.5 : 1.0;
      acc += w * std::abs(ue.u[j] - b.evaluate(std::abs(ue.x(j))));
    }
    rep.l1 = acc * ue.h;
    rep.w2 = std::numeric_limits<double>::quiet_NaN();
    rep.hhat = std::numeric_limits<double>::quiet_NaN();
    rep.fhat = std::numeric_limits<double>::quiet_NaN();
  }
  if (std::abs(p.alpha - 1.0) < 1e-12) {
    const auto& x = state.positions();
    const int N = state.n();
    const double dn = static_cast<double>(N);
    double acc = 0.0;
    for (int i = 1; i + 1 < N; ++i) {
      const double xpc = dn * (x[i + 1] - x[i - 1]) / 2.0;
      const double xpp = dn * dn * (x[i + 1] - 2.0 * x[i] + x[i - 1]);
      const double du = -xpp / (xpc * xpc * xpc);
      const double db = b.derivative(x[i]);
      acc += (du - db) * (du - db) * xpc;
    }
    rep.w12_gap = std::sqrt(acc / dn);
  }
  return rep;
}

}  // namespace mmflow
