#include "mmflow/reference_flows.hpp"

#include <cmath>

#include "mmflow/diagnostics.hpp"
#include "mmflow/errors.hpp"
#include "mmflow/util.hpp"

namespace mmflow {

namespace {

void require_valid(const FinDimProblem& prob) {
  if (prob.m < 1 || static_cast<int>(prob.u0.size()) != prob.m) {
    throw BadDimension("state dimension and u0 size must agree and be >= 1");
  }
  if (!(prob.kappa > 0.0) || !(prob.theta > 0.0)) {
    throw OutOfRange("kappa and theta must be positive");
  }
  if (prob.family == PotentialFamily::perturbed && prob.eps < 0.0) {
    throw OutOfRange("perturbation strength must be >= 0");
  }
}

}  // namespace

double potential_V(const FinDimProblem& prob, const std::vector<double>& u) {
  double q = 0.0, quart = 0.0;
  for (double v : u) {
    q += v * v;
    quart += v * v * v * v;
  }
  double val = 0.5 * prob.kappa * q;
  if (prob.family == PotentialFamily::perturbed) val += 0.25 * prob.eps * quart;
  return val;
}

std::vector<double> grad_V(const FinDimProblem& prob,
                           const std::vector<double>& u) {
  std::vector<double> g(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    g[i] = prob.kappa * u[i];
    if (prob.family == PotentialFamily::perturbed) {
      g[i] += prob.eps * u[i] * u[i] * u[i];
    }
  }
  return g;
}

double energy_U(const FinDimProblem& prob, const std::vector<double>& u) {
  const std::vector<double> gv = grad_V(prob, u);
  double g2 = 0.0;
  for (double v : gv) g2 += v * v;
  return g2 + 2.0 * (prob.theta - prob.kappa) * potential_V(prob, u);
}

std::vector<double> grad_U(const FinDimProblem& prob,
                           const std::vector<double>& u) {
  // grad U = 2 (Hess V + (theta - kappa) I) grad V; Hess V is diagonal here
  const std::vector<double> gv = grad_V(prob, u);
  std::vector<double> g(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    double hess_ii = prob.kappa;
    if (prob.family == PotentialFamily::perturbed) {
      hess_ii += 3.0 * prob.eps * u[i] * u[i];
    }
    g[i] = 2.0 * (hess_ii + prob.theta - prob.kappa) * gv[i];
  }
  return g;
}

FinDimTrajectory findim_flow(const FinDimProblem& prob, double horizon,
                             double dt) {
  require_valid(prob);
  if (!(horizon > 0.0) || !(dt > 0.0)) {
    throw OutOfRange("horizon and dt must be positive");
  }
  const int steps = static_cast<int>(std::llround(horizon / dt));
  if (steps < 1 || std::abs(steps * dt - horizon) > 1e-9 * horizon) {
    throw OutOfRange("dt must divide the horizon");
  }

  double escape = 0.0;
  for (double v : prob.u0) escape = std::max(escape, std::abs(v));
  escape = 1e6 * (1.0 + escape);

  FinDimTrajectory traj;
  traj.t.reserve(steps + 1);
  traj.u.reserve(steps + 1);
  traj.t.push_back(0.0);
  traj.u.push_back(prob.u0);

  std::vector<double> u = prob.u0;
  auto rhs = [&prob](const std::vector<double>& v) {
    std::vector<double> g = grad_U(prob, v);
    for (double& x : g) x = -x;
    return g;
  };
  std::vector<double> tmp(prob.m);
  for (int n = 0; n < steps; ++n) {
    const std::vector<double> k1 = rhs(u);
    for (int i = 0; i < prob.m; ++i) tmp[i] = u[i] + 0.5 * dt * k1[i];
    const std::vector<double> k2 = rhs(tmp);
    for (int i = 0; i < prob.m; ++i) tmp[i] = u[i] + 0.5 * dt * k2[i];
    const std::vector<double> k3 = rhs(tmp);
    for (int i = 0; i < prob.m; ++i) tmp[i] = u[i] + dt * k3[i];
    const std::vector<double> k4 = rhs(tmp);
    for (int i = 0; i < prob.m; ++i) {
      u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (!std::isfinite(u[i]) || std::abs(u[i]) > escape) {
        throw Blowup("state escaped at t = " + num_str((n + 1) * dt));
      }
    }
    traj.t.push_back((n + 1) * dt);
    traj.u.push_back(u);
  }
  return traj;
}

double findim_interchange_residual(const FinDimProblem& prob,
                                   const FinDimTrajectory& traj) {
  require_valid(prob);
  if (traj.t.size() < 3) {
    throw InsufficientSignal("need at least three samples");
  }
  double worst = 0.0;
  for (std::size_t k = 1; k + 1 < traj.t.size(); ++k) {
    const double dvdt = (potential_V(prob, traj.u[k + 1]) -
                         potential_V(prob, traj.u[k - 1])) /
                        (traj.t[k + 1] - traj.t[k - 1]);
    const std::vector<double> gu = grad_U(prob, traj.u[k]);
    const std::vector<double> gv = grad_V(prob, traj.u[k]);
    double dot = 0.0;
    for (std::size_t i = 0; i < gu.size(); ++i) dot += gu[i] * gv[i];
    worst = std::max(worst, std::abs(dvdt + dot));
  }
  return worst;
}

std::pair<double, double> findim_decay_rates(const FinDimProblem& prob,
                                             const FinDimTrajectory& traj) {
  require_valid(prob);
  std::vector<double> v(traj.t.size()), uu(traj.t.size());
  for (std::size_t k = 0; k < traj.t.size(); ++k) {
    v[k] = potential_V(prob, traj.u[k]);
    uu[k] = energy_U(prob, traj.u[k]);
  }
  if (!(v.front() > 0.0)) {
    throw InsufficientDecay("flow starts at the minimum; nothing decays");
  }
  const double floor_v = 1e-13 * (1.0 + std::abs(v.front()));
  const double floor_u = 1e-13 * (1.0 + std::abs(uu.front()));
  // the fit needs at least five usable e-foldings before the signal floors out
  auto efolds_ok = [](const std::vector<double>& s, double fl) {
    bool floored = false;
    for (double x : s) floored = floored || !(x > fl);
    return !floored || std::log(s.front() / fl) >= 5.0;
  };
  if (!efolds_ok(v, floor_v) || !efolds_ok(uu, floor_u)) {
    throw InsufficientDecay("signal reaches the floating-point floor before 5 e-foldings");
  }
  const DecayFit fv = fit_decay_rate(traj.t, v, floor_v);
  const DecayFit fu = fit_decay_rate(traj.t, uu, floor_u);
  const double bound_v = 4.0 * prob.kappa * prob.theta;
  const double bound_u = 4.0 * std::min(prob.kappa, prob.theta) * prob.theta;
  if (fv.rate < 0.99 * bound_v || fu.rate < 0.99 * bound_u) {
    throw InsufficientDecay("fitted rates " + num_str(fv.rate) + ", " +
                            num_str(fu.rate) + " fall below the guaranteed " +
                            num_str(bound_v) + ", " + num_str(bound_u));
  }
  return {fv.rate, fu.rate};
}

double ou_variance_oracle(double sigma0_sq, double t, const ModelParameters& p) {
  if (!(sigma0_sq > 0.0)) throw OutOfRange("initial variance must be positive");
  if (t < 0.0) throw OutOfRange("time must be >= 0");
  if (p.lambda == 0.0) return sigma0_sq + t;
  const double l = p.capital_lambda;
  const double s_inf = 1.0 / (2.0 * l);
  return s_inf + (sigma0_sq - s_inf) * std::exp(-2.0 * l * t);
}

MatrixCheckResult matrix_trace_inequality_check(const std::vector<double>& a,
                                                const std::vector<double>& e,
                                                double slack) {
  const int d = static_cast<int>(e.size());
  if (d < 1 || static_cast<int>(a.size()) != d * d) {
    throw BadDimension("matrix must be d x d against a direction of size d");
  }
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      if (std::abs(a[i * d + j] - a[j * d + i]) > 1e-12 * std::max(1.0, scale)) {
        throw NotSymmetric("matrix entry (" + std::to_string(i) + "," +
                           std::to_string(j) + ") breaks symmetry");
      }
    }
  }
  double e2 = 0.0;
  for (double v : e) e2 += v * v;
  if (!(e2 > 0.0)) throw ZeroVector("direction must be nonzero");

  double frob = 0.0, tr = 0.0, aee = 0.0;
  for (int i = 0; i < d; ++i) {
    tr += a[i * d + i];
    for (int j = 0; j < d; ++j) {
      frob += a[i * d + j] * a[i * d + j];
      aee += a[i * d + j] * e[i] * e[j];
    }
  }
  const double dd = static_cast<double>(d);
  MatrixCheckResult res;
  res.lhs = (dd - 1.0) * frob - (dd - 1.0) / dd * tr * tr;
  const double num = dd * aee - tr * e2;
  res.rhs = num * num / (dd * e2 * e2);
  res.holds = res.lhs >= res.rhs - slack * std::max(1.0, std::abs(res.rhs));
  return res;
}

}  // namespace mmflow
