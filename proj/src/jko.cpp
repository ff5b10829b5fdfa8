#include "mmflow/jko.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "mmflow/barenblatt.hpp"
#include "mmflow/errors.hpp"
#include "mmflow/util.hpp"

namespace mmflow {

void validate(const JkoConfig& cfg) {
  if (!(cfg.inner_grad_tol > 0.0)) {
    throw OutOfRange("inner_grad_tol must be > 0");
  }
  if (cfg.inner_max_iter < 50) {
    throw OutOfRange("inner_max_iter must be >= 50");
  }
  if (cfg.eulerian_grid_size < 32) {
    throw OutOfRange("eulerian_grid_size must be >= 32");
  }
  if (!(cfg.ls_contraction > 0.0 && cfg.ls_contraction < 1.0) ||
      !(cfg.ls_sufficient_decrease > 0.0 && cfg.ls_sufficient_decrease < 0.5)) {
    throw OutOfRange("line search constants out of range");
  }
}

Partition uniform_partition(double tau, int steps) {
  if (!(tau > 0.0) || steps < 0) {
    throw OutOfRange("uniform partition needs tau > 0 and steps >= 0");
  }
  Partition p;
  p.tau.assign(steps, tau);
  p.t.resize(steps + 1);
  p.t[0] = 0.0;
  for (int n = 0; n < steps; ++n) p.t[n + 1] = p.t[n] + tau;
  return p;
}

Partition geometric_partition(double tau0, double ratio, int steps) {
  if (!(tau0 > 0.0) || !(ratio > 0.0) || steps < 0) {
    throw OutOfRange("geometric partition needs tau0, ratio > 0 and steps >= 0");
  }
  Partition p;
  p.tau.resize(steps);
  p.t.resize(steps + 1);
  p.t[0] = 0.0;
  double tau = tau0;
  for (int n = 0; n < steps; ++n) {
    p.tau[n] = tau;
    p.t[n + 1] = p.t[n] + tau;
    tau *= ratio;
  }
  return p;
}

namespace {

double sup_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// objective evaluation: Phi plus optional transport term (tau_inv = 1/tau, or
// 0 for the bare functional)
struct Objective {
  const std::vector<double>* anchor = nullptr;  // previous positions
  double tau_inv = 0.0;
  FunctionalKind kind = FunctionalKind::fourth_order;
  const ModelParameters* p = nullptr;
  mutable bool floored = false;

  double eval(const std::vector<double>& x, std::vector<double>* grad) const {
    bool fl = false;
    double v = (kind == FunctionalKind::fourth_order)
                   ? detail::information_value_grad(x, *p, grad, &fl)
                   : detail::entropy_value_grad(x, *p, grad, &fl);
    if (fl) floored = true;
    if (tau_inv > 0.0) {
      const double n = static_cast<double>(x.size());
      const double c = tau_inv / n;
      double q = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - (*anchor)[i];
        q += d * d;
        if (grad) (*grad)[i] += c * d;
      }
      v += 0.5 * c * q;
    }
    return v;
  }
};

struct SolveResult {
  std::vector<double> x;
  double value = 0.0;
  double grad_norm = 0.0;
  int iters = 0;
  bool floored = false;
};

// largest step along direction d keeping all gaps above the floor
double max_feasible_step(const std::vector<double>& x,
                         const std::vector<double>& d, double gmin) {
  double s = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double dgap = d[i] - d[i - 1];
    if (dgap < 0.0) {
      const double room = (x[i] - x[i - 1]) - gmin;
      s = std::min(s, room / (-dgap));
    }
  }
  return s;
}

// symmetric pentadiagonal matrix factored as L D L^T; the objective couples
// each position to at most its two neighbours on either side
struct BandFactor {
  std::vector<double> d, l1, l2;  // pivots, first and second subdiagonals of L
  bool ok = false;
};

BandFactor band_ldlt(const std::vector<double>& a0, const std::vector<double>& a1,
                     const std::vector<double>& a2, double mu) {
  const std::size_t n = a0.size();
  BandFactor f;
  f.d.assign(n, 0.0);
  f.l1.assign(n > 1 ? n - 1 : 0, 0.0);
  f.l2.assign(n > 2 ? n - 2 : 0, 0.0);
  double scale = std::abs(mu);
  for (double v : a0) scale = std::max(scale, std::abs(v));
  const double pivot_floor = 1e-14 * std::max(scale, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double di = a0[i] + mu;
    if (i >= 1) di -= f.d[i - 1] * f.l1[i - 1] * f.l1[i - 1];
    if (i >= 2) di -= f.d[i - 2] * f.l2[i - 2] * f.l2[i - 2];
    if (!(di > pivot_floor)) return f;  // not safely positive definite
    f.d[i] = di;
    if (i + 1 < n) {
      double v = a1[i];
      if (i >= 1) v -= f.d[i - 1] * f.l1[i - 1] * f.l2[i - 1];
      f.l1[i] = v / di;
    }
    if (i + 2 < n) f.l2[i] = a2[i] / di;
  }
  f.ok = true;
  return f;
}

std::vector<double> band_solve(const BandFactor& f, const std::vector<double>& b) {
  const std::size_t n = b.size();
  std::vector<double> z(b);
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= 1) z[i] -= f.l1[i - 1] * z[i - 1];
    if (i >= 2) z[i] -= f.l2[i - 2] * z[i - 2];
  }
  for (std::size_t i = 0; i < n; ++i) z[i] /= f.d[i];
  for (std::size_t i = n; i-- > 0;) {
    if (i + 1 < n) z[i] -= f.l1[i] * z[i + 1];
    if (i + 2 < n) z[i] -= f.l2[i] * z[i + 2];
  }
  return z;
}

// pentadiagonal Hessian by forward differences of the analytic gradient;
// perturbing every fifth coordinate at once keeps the probes independent
// because couplings reach at most two positions away
void fd_band_hessian(const Objective& obj, const std::vector<double>& x,
                     const std::vector<double>& g0, std::vector<double>& a0,
                     std::vector<double>& a1, std::vector<double>& a2) {
  const std::size_t n = x.size();
  const bool floored_before = obj.floored;
  // probe widths stay below the neighbouring gaps to keep the ordering
  std::vector<double> h(n);
  const double hb = std::sqrt(std::numeric_limits<double>::epsilon());
  for (std::size_t j = 0; j < n; ++j) {
    double cap = std::numeric_limits<double>::infinity();
    if (j >= 1) cap = std::min(cap, 0.25 * (x[j] - x[j - 1]));
    if (j + 1 < n) cap = std::min(cap, 0.25 * (x[j + 1] - x[j]));
    h[j] = std::min(hb * (1.0 + std::abs(x[j])), cap);
    if (!(h[j] > 0.0)) h[j] = hb;
  }
  std::vector<std::array<double, 5>> col(n, {0.0, 0.0, 0.0, 0.0, 0.0});
  std::vector<double> xp(n), gp(n);
  for (std::size_t c = 0; c < 5 && c < n; ++c) {
    xp = x;
    for (std::size_t j = c; j < n; j += 5) xp[j] += h[j];
    obj.eval(xp, &gp);
    for (std::size_t j = c; j < n; j += 5) {
      const std::size_t rlo = j >= 2 ? j - 2 : 0;
      const std::size_t rhi = std::min(n - 1, j + 2);
      for (std::size_t r = rlo; r <= rhi; ++r)
        col[j][r - j + 2] = (gp[r] - g0[r]) / h[j];
    }
  }
  a0.assign(n, 0.0);
  a1.assign(n > 1 ? n - 1 : 0, 0.0);
  a2.assign(n > 2 ? n - 2 : 0, 0.0);
  for (std::size_t j = 0; j < n; ++j) a0[j] = col[j][2];
  for (std::size_t j = 0; j + 1 < n; ++j)
    a1[j] = 0.5 * (col[j][3] + col[j + 1][1]);
  for (std::size_t j = 0; j + 2 < n; ++j)
    a2[j] = 0.5 * (col[j][4] + col[j + 2][0]);
  obj.floored = floored_before;  // probes are not iterates
}

// Levenberg-damped Newton descent on the banded Hessian.
//
// The displacement per iteration is capped at a fraction of the state span:
// the discrete information energy vanishes on evenly collapsed states, so an
// unrestricted line search can tunnel from the physical basin into that
// spurious one. Local steps keep descent inside the basin of the start.
//
// Acceptance is Armijo while the objective is resolvable; once it is flat to
// roundoff, a trial that keeps the value within rounding and cuts the
// gradient sup-norm by 10% is taken instead, so the gradient can still be
// driven to tolerances far below sqrt(machine eps).
//
// stall_tol: when no further progress of either kind is possible (objective
// and gradient both at their numeric floor) the point is accepted if the
// gradient is below this looser threshold instead of failing the whole run.
SolveResult newton_minimize(std::vector<double> x, const Objective& obj,
                            double grad_tol, int max_iter, double ls_c1,
                            double ls_rho, double stall_tol) {
  const std::size_t n = x.size();
  std::vector<double> g(n);
  double f = obj.eval(x, &g);
  if (!std::isfinite(f)) {
    throw NonfiniteObjective("objective is not finite at the starting point");
  }

  std::vector<double> a0, a1, a2, mg(n), dir(n), xn(n), gn(n);
  double mu = 0.0;
  int it = 0;
  for (; it < max_iter; ++it) {
    const double gsup = sup_norm(g);
    if (gsup <= grad_tol) {
      return {std::move(x), f, gsup, it, obj.floored};
    }

    fd_band_hessian(obj, x, g, a0, a1, a2);
    double dscale = 1.0;
    for (double v : a0) dscale = std::max(dscale, std::abs(v));
    const double mu_min = 1e-12 * dscale;

    BandFactor fac = band_ldlt(a0, a1, a2, mu);
    for (int raises = 0; !fac.ok && raises < 64; ++raises) {
      mu = std::max(8.0 * mu, mu_min);
      fac = band_ldlt(a0, a1, a2, mu);
    }
    double gd = 0.0;
    bool newton_dir = false;
    if (fac.ok) {
      for (std::size_t i = 0; i < n; ++i) mg[i] = -g[i];
      dir = band_solve(fac, mg);
      for (std::size_t i = 0; i < n; ++i) gd += g[i] * dir[i];
      newton_dir = gd < 0.0;
    }
    if (!newton_dir) {  // fall back to scaled steepest descent
      for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i] / dscale;
      gd = 0.0;
      for (std::size_t i = 0; i < n; ++i) gd += g[i] * dir[i];
    }

    // a Newton correction below the representable spacing of the iterate
    // cannot change it: the point is converged to working precision and the
    // remaining gradient is evaluation roundoff
    const double xscale =
        1.0 + std::max(std::abs(x.front()), std::abs(x.back()));
    if (newton_dir &&
        sup_norm(dir) <=
            4.0 * std::numeric_limits<double>::epsilon() * xscale) {
      return {std::move(x), f, gsup, it, obj.floored};
    }

    const double span = x.back() - x.front();
    const double gmin = kGapFloorRel * span;
    const double smax = max_feasible_step(x, dir, gmin);
    if (!(smax > 0.0)) {
      throw MonotonicityViolation(
          "no feasible step length preserves the particle ordering");
    }
    const double dsup = sup_norm(dir);
    const double max_move = 0.1 * span;
    double step = std::min(
        {1.0, 0.99 * smax, max_move / std::max(dsup, 1e-300)});
    const double feps =
        8.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
    double fn = 0.0;
    bool accepted = false;
    bool full_step = false;
    for (int ls = 0; ls < 64; ++ls) {
      for (std::size_t i = 0; i < n; ++i) xn[i] = x[i] + step * dir[i];
      fn = obj.eval(xn, &gn);
      if (std::isfinite(fn)) {
        const bool armijo = fn <= f + ls_c1 * step * gd && fn < f;
        const bool grad_progress =
            fn <= f + feps && sup_norm(gn) <= 0.9 * gsup;
        if (armijo || grad_progress) {
          accepted = true;
          full_step = ls == 0;
          break;
        }
      }
      step *= ls_rho;
    }
    if (!accepted) {
      if (gsup <= stall_tol) {
        return {std::move(x), f, gsup, it, obj.floored};
      }
      if (smax < 1e-14) {
        throw MonotonicityViolation(
            "line search pinned at the particle ordering constraint");
      }
      mu = std::max(8.0 * mu, mu_min);
      if (mu > 1e12 * dscale) {
        throw InnerSolverDiverged(
            "line search failed to find sufficient decrease");
      }
      continue;  // sharpen the damping and retry from the same point
    }

    x.swap(xn);
    g.swap(gn);
    f = fn;
    mu = full_step ? 0.25 * mu : 2.0 * mu;
  }
  if (sup_norm(g) <= stall_tol) {
    return {std::move(x), f, sup_norm(g), it, obj.floored};
  }
  throw InnerSolverDiverged("gradient norm " + num_str(sup_norm(g)) +
                            " above tolerance after " + std::to_string(max_iter) +
                            " iterations");
}

}  // namespace

std::vector<double> functional_gradient(const std::vector<double>& x,
                                        FunctionalKind kind,
                                        const ModelParameters& p) {
  std::vector<double> g;
  if (kind == FunctionalKind::fourth_order) {
    detail::information_value_grad(x, p, &g);
  } else {
    detail::entropy_value_grad(x, p, &g);
  }
  return g;
}

double functional_value(const QuantileDensity& a, FunctionalKind kind,
                        const ModelParameters& p) {
  return kind == FunctionalKind::fourth_order ? information(a, p)
                                              : entropy(a, p);
}

std::vector<double> objective_gradient(const std::vector<double>& x,
                                       const QuantileDensity& prev, double tau,
                                       FunctionalKind kind,
                                       const ModelParameters& p) {
  if (static_cast<int>(x.size()) != prev.n()) {
    throw MismatchedResolution("candidate and anchor sizes differ");
  }
  if (!(tau > 0.0)) throw OutOfRange("tau must be > 0");
  Objective obj{&prev.positions(), 1.0 / tau, kind, &p, false};
  std::vector<double> g;
  obj.eval(x, &g);
  return g;
}

std::pair<QuantileDensity, JkoStepRecord> jko_step(const QuantileDensity& prev,
                                                   double tau,
                                                   FunctionalKind kind,
                                                   const ModelParameters& p,
                                                   const JkoConfig& cfg) {
  validate(cfg);
  if (!(tau > 0.0)) throw OutOfRange("tau must be > 0");
  if (p.dim != 1) throw BadDimension("the scheme runs on d = 1 states");

  Objective obj{&prev.positions(), 1.0 / tau, kind, &p, false};
  SolveResult res =
      newton_minimize(prev.positions(), obj, cfg.inner_grad_tol,
                      cfg.inner_max_iter, cfg.ls_sufficient_decrease,
                      cfg.ls_contraction, 10.0 * cfg.inner_grad_tol);

  QuantileDensity next(std::move(res.x));
  JkoStepRecord rec;
  rec.tau = tau;
  const double w2 = wasserstein_distance(prev, next);
  rec.w2sq = w2 * w2;
  rec.f_before = information(prev, p);
  rec.f_after = information(next, p);
  rec.h_before = entropy(prev, p);
  rec.h_after = entropy(next, p);
  rec.logh_before = log_entropy(prev);
  rec.logh_after = log_entropy(next);
  rec.m2 = second_moment(next);
  rec.hess_sn =
      hessian_seminorm(to_eulerian(next, cfg.eulerian_grid_size), p.alpha);
  rec.inner_iters = res.iters;
  rec.grad_norm = res.grad_norm;
  rec.floor_hit = res.floored;
  return {std::move(next), rec};
}

Trajectory run_trajectory(const QuantileDensity& initial, const Partition& part,
                          FunctionalKind kind, const ModelParameters& p,
                          const JkoConfig& cfg) {
  validate(cfg);
  Trajectory tr{p, kind, part, cfg, {}, {}};
  tr.states.reserve(part.steps() + 1);
  tr.records.reserve(part.steps());
  tr.states.push_back(initial);
  for (int n = 0; n < part.steps(); ++n) {
    try {
      auto [next, rec] = jko_step(tr.states.back(), part.tau[n], kind, p, cfg);
      rec.n = n + 1;
      tr.states.push_back(std::move(next));
      tr.records.push_back(rec);
    } catch (const Error& e) {
      throw InnerSolverDiverged("step " + std::to_string(n + 1) + ": " +
                                e.what());
    }
  }
  return tr;
}

namespace {

// piecewise-linear interpolation of the quantile function from midpoint
// nodes on a coarse grid to midpoint nodes on a finer one; the end segments
// extrapolate with the end slopes, which keeps the result strictly monotone
std::vector<double> refine_quantiles(const std::vector<double>& xs,
                                     int n_dst) {
  const int ns = static_cast<int>(xs.size());
  std::vector<double> out(n_dst);
  for (int i = 0; i < n_dst; ++i) {
    const double pos = (i + 0.5) / n_dst * ns - 0.5;
    int j = static_cast<int>(std::floor(pos));
    j = std::max(0, std::min(j, ns - 2));
    out[i] = xs[j] + (pos - j) * (xs[j + 1] - xs[j]);
  }
  return out;
}

}  // namespace

DiscreteEquilibrium equilibrium_state(const ModelParameters& p, int n_points,
                                      FunctionalKind kind, double grad_tol,
                                      int max_iter) {
  if (!(p.lambda > 0.0)) {
    throw NoStationaryState("equilibrium_state needs lambda > 0");
  }
  const Objective bare{nullptr, 0.0, kind, &p, false};

  // grid continuation: polish the profile quantiles on a coarse grid, where
  // the stationary state's basin is wide, then refine through doublings,
  // re-polishing at each level; the interpolated seeds stay close enough to
  // the stationary state that damped Newton never leaves its basin
  std::vector<int> levels{std::min(64, n_points)};
  while (2 * levels.back() < n_points) levels.push_back(2 * levels.back());
  if (levels.back() != n_points) levels.push_back(n_points);

  std::vector<double> x =
      to_quantile(stationary_profile(p), levels.front()).positions();
  int used = 0;
  SolveResult res;
  for (std::size_t li = 0; li < levels.size(); ++li) {
    if (li > 0) x = refine_quantiles(x, levels[li]);
    const bool final_level = li + 1 == levels.size();
    const double tol = final_level ? grad_tol : std::max(grad_tol, 1e-8);
    // on a failed plain solve, take one proximally regularized step from the
    // current iterate and try again; escalate the regularization on repeats
    double shift = 0.0;
    for (;;) {
      const int budget = max_iter - used;
      if (budget <= 0) {
        throw InnerSolverDiverged(
            "stationary solve: iteration budget exhausted at " +
            std::to_string(levels[li]) + " points");
      }
      try {
        if (shift > 0.0) {
          const std::vector<double> anchor = x;
          const Objective sub{&anchor, shift * levels[li], kind, &p, false};
          std::vector<double> g;
          bare.eval(x, &g);
          const double sub_tol = std::max(tol, 1e-2 * sup_norm(g));
          SolveResult pre = newton_minimize(x, sub, sub_tol,
                                            std::min(500, budget), 1e-4, 0.5,
                                            10.0 * sub_tol);
          used += std::max(pre.iters, 1);
          x = std::move(pre.x);
        }
        res = newton_minimize(x, bare, tol, std::min(5000, budget), 1e-4, 0.5,
                              10.0 * tol);
        used += std::max(res.iters, 1);
        x = res.x;
        break;
      } catch (const InnerSolverDiverged&) {
        used += 16;
        shift = shift == 0.0 ? 4.0 : 16.0 * shift;
        if (shift > 1e9) throw;
      }
    }
  }
  // the stall return of the inner solver can leave the gradient between the
  // requested tolerance and the documented 10x slack; anything above that is
  // a genuine failure
  if (res.grad_norm > 10.0 * grad_tol) {
    throw InnerSolverDiverged("stationary solve: gradient norm " +
                              num_str(res.grad_norm) + " above tolerance");
  }
  QuantileDensity st(std::move(x));
  const double f = information(st, p);
  const double h = entropy(st, p);
  return {std::move(st), f, h, res.grad_norm};
}

}  // namespace mmflow
