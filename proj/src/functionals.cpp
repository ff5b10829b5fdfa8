#include "mmflow/functionals.hpp"

#include <algorithm>
#include <cmath>

#include "mmflow/errors.hpp"
#include "mmflow/util.hpp"

namespace mmflow {

namespace {

void require_1d(const ModelParameters& p, const char* op) {
  if (p.dim != 1) {
    throw BadDimension(std::string(op) + " operates on d = 1 states");
  }
}

double second_moment_raw(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

struct GapData {
  int n = 0;
  double gmin = 0.0;
  bool floored = false;
  std::vector<double> gap;  // effective gaps, floored at gmin
};

GapData effective_gaps(const std::vector<double>& x) {
  GapData g;
  g.n = static_cast<int>(x.size());
  g.gmin = kGapFloorRel * (x.back() - x.front());
  g.gap.resize(g.n - 1);
  for (int j = 0; j + 1 < g.n; ++j) {
    const double d = x[j + 1] - x[j];
    if (d < g.gmin) {
      g.gap[j] = g.gmin;
      g.floored = true;
    } else {
      g.gap[j] = d;
    }
  }
  return g;
}

}  // namespace

namespace detail {

double information_value_grad(const std::vector<double>& x,
                              const ModelParameters& p,
                              std::vector<double>* grad, bool* floored) {
  const GapData g = effective_gaps(x);
  if (floored) *floored = g.floored;
  const int N = g.n;
  const double dn = static_cast<double>(N);
  const double inv_n = 1.0 / dn;
  const int J = N - 1;  // gap count

  std::vector<double> xp(J), w(J);
  for (int j = 0; j < J; ++j) {
    xp[j] = dn * g.gap[j];
    w[j] = std::pow(xp[j], -p.alpha);
  }

  const double c = inv_n / (2.0 * p.alpha);
  double f0 = 0.0;
  std::vector<double> gw, gxp, gx;
  if (grad) {
    gw.assign(J, 0.0);
    gxp.assign(J, 0.0);
    gx.assign(N, 0.0);
  }

  // interior nodes: centered w-difference over centered X'
  for (int i = 1; i + 1 < N; ++i) {
    const double dw = dn * (w[i] - w[i - 1]);
    const double xpc = dn * (x[i + 1] - x[i - 1]) / 2.0;
    f0 += c * dw * dw / xpc;
    if (grad) {
      const double t1 = 2.0 * c * dw / xpc;
      gw[i] += t1 * dn;
      gw[i - 1] -= t1 * dn;
      const double t2 = -c * dw * dw / (xpc * xpc);
      gx[i + 1] += t2 * dn / 2.0;
      gx[i - 1] -= t2 * dn / 2.0;
    }
  }
  // boundary nodes: one-sided difference against the vacuum value u^alpha = 0
  // at the support edge, over the one-sided X', charged with the half-cell
  // mass between the edge node and the first cell midpoint
  const double cb = 0.5 * c;
  {
    const double dw = dn * w[0];
    f0 += cb * dw * dw / xp[0];
    if (grad) {
      gw[0] += 2.0 * cb * dw / xp[0] * dn;
      gxp[0] += -cb * dw * dw / (xp[0] * xp[0]);
    }
  }
  {
    const double dw = dn * w[J - 1];
    f0 += cb * dw * dw / xp[J - 1];
    if (grad) {
      gw[J - 1] += 2.0 * cb * dw / xp[J - 1] * dn;
      gxp[J - 1] += -cb * dw * dw / (xp[J - 1] * xp[J - 1]);
    }
  }

  double value = f0;
  if (p.lambda > 0.0) {
    value += 0.5 * p.lambda * second_moment_raw(x);
  }

  if (grad) {
    for (int j = 0; j < J; ++j) {
      const bool clamped = (x[j + 1] - x[j]) < g.gmin;
      double gd = 0.0;
      if (!clamped) {
        // dw/dgap = -alpha w / gap, dxp/dgap = N
        gd = gw[j] * (-p.alpha * w[j] / g.gap[j]) + gxp[j] * dn;
      }
      gx[j] -= gd;
      gx[j + 1] += gd;
    }
    if (p.lambda > 0.0) {
      for (int k = 0; k < N; ++k) gx[k] += p.lambda * x[k] * inv_n;
    }
    *grad = std::move(gx);
  }
  return value;
}

double log_entropy_raw(const std::vector<double>& x) {
  const GapData g = effective_gaps(x);
  const int J = g.n - 1;
  const double dn = static_cast<double>(g.n);
  double s = 0.0;
  for (int j = 0; j < J; ++j) {
    // end cells extend over the outer half cells of the mass grid
    const double wgt = (j == 0 || j == J - 1) ? 1.5 / dn : 1.0 / dn;
    s -= wgt * std::log(dn * g.gap[j]);
  }
  return s;
}

double entropy_value_grad(const std::vector<double>& x,
                          const ModelParameters& p, std::vector<double>* grad,
                          bool* floored) {
  const GapData g = effective_gaps(x);
  if (floored) *floored = g.floored;
  const int N = g.n;
  const double dn = static_cast<double>(N);
  const double inv_n = 1.0 / dn;
  const int J = N - 1;
  const double lam_big = p.capital_lambda;

  double value = 0.0;
  std::vector<double> gx;
  if (grad) gx.assign(N, 0.0);

  if (p.alpha > 0.5 + 1e-6) {
    const double pref = p.theta / (p.alpha - 0.5);
    const double e = 0.5 - p.alpha;
    double ip = 0.0;
    for (int j = 0; j < J; ++j) ip += std::pow(dn * g.gap[j], e);
    ip *= inv_n;
    value = pref * (ip - 1.0);
    if (grad) {
      for (int j = 0; j < J; ++j) {
        const bool clamped = (x[j + 1] - x[j]) < g.gmin;
        if (clamped) continue;
        const double gd = pref * inv_n * e * dn * std::pow(dn * g.gap[j], e - 1.0);
        gx[j] -= gd;
        gx[j + 1] += gd;
      }
    }
  } else {
    value = 0.5 * log_entropy_raw(x);
    if (grad) {
      for (int j = 0; j < J; ++j) {
        const bool clamped = (x[j + 1] - x[j]) < g.gmin;
        if (clamped) continue;
        const double wgt = (j == 0 || j == J - 1) ? 1.5 * inv_n : inv_n;
        const double gd = -0.5 * wgt / g.gap[j];
        gx[j] -= gd;
        gx[j + 1] += gd;
      }
    }
  }

  if (p.capital_lambda > 0.0) {
    value += 0.5 * lam_big * second_moment_raw(x);
    if (grad) {
      for (int k = 0; k < N; ++k) gx[k] += lam_big * x[k] * inv_n;
    }
  }
  if (grad) *grad = std::move(gx);
  return value;
}

double unconfined_dilation_derivative(const std::vector<double>& x,
                                      const ModelParameters& p,
                                      bool second_order) {
  if (!second_order) {
    ModelParameters p0 = p;
    p0.lambda = 0.0;
    const double f0 = information_value_grad(x, p0, nullptr);
    return -p.delta * f0;
  }
  // d/dr of the zero-confinement entropy part along r X at r = 1
  if (p.alpha > 0.5 + 1e-6) {
    const GapData g = effective_gaps(x);
    const double dn = static_cast<double>(g.n);
    const double e = 0.5 - p.alpha;
    double ip = 0.0;
    for (int j = 0; j + 1 < g.n; ++j) ip += std::pow(dn * g.gap[j], e);
    ip /= dn;
    return p.theta / (p.alpha - 0.5) * e * ip;
  }
  // -(1/2) sum of log-entropy weights = -1/2
  return -0.5;
}

}  // namespace detail

double information(const QuantileDensity& a, const ModelParameters& p) {
  require_1d(p, "information");
  return detail::information_value_grad(a.positions(), p, nullptr);
}

double entropy(const QuantileDensity& a, const ModelParameters& p) {
  require_1d(p, "entropy");
  return detail::entropy_value_grad(a.positions(), p, nullptr);
}

double log_entropy(const QuantileDensity& a) {
  return detail::log_entropy_raw(a.positions());
}

double entropy_slope_squared(const QuantileDensity& a,
                             const ModelParameters& p) {
  require_1d(p, "entropy_slope_squared");
  const double f = information(a, p);
  const double h = entropy(a, p);
  return f - (p.delta - 2.0) * p.capital_lambda * h -
         2.0 * p.dim * p.theta * p.capital_lambda;
}

double dilation_derivative(const QuantileDensity& a, const ModelParameters& p) {
  require_1d(p, "dilation_derivative");
  return detail::unconfined_dilation_derivative(a.positions(), p, false) +
         p.lambda * second_moment(a);
}

namespace {

// quintic smoothstep and the antiderivatives used by the truncated shapes
double qs(double t) { return t * t * t * (10.0 + t * (-15.0 + 6.0 * t)); }
double qs1(double t) { return t * t * (30.0 + t * (-60.0 + 30.0 * t)); }
double qs2(double t) { return t * (60.0 + t * (-180.0 + 120.0 * t)); }
double int_qs(double t) {  // int_0^t qs
  return t * t * t * t * (2.5 + t * (-3.0 + t));
}
double int_t_qs(double t) {  // int_0^t tau qs(tau)
  return std::pow(t, 5) * (2.0 + t * (-2.5 + t * 6.0 / 7.0));
}
double int_t2_qs(double t) {  // int_0^t tau^2 qs(tau)
  return std::pow(t, 6) * (5.0 / 3.0 + t * (-15.0 / 7.0 + t * 0.75));
}

double scan_kappa(const std::function<double(double)>& d2, double lo,
                  double hi) {
  double m = 0.0;
  const int K = 40000;
  for (int i = 0; i <= K; ++i) {
    m = std::max(m, std::abs(d2(lo + (hi - lo) * i / K)));
  }
  return 1.05 * m;
}

}  // namespace

TestFunction polynomial_bump(double a, double center) {
  auto env = [a, center](double x, int k) -> double {
    const double t = (x - center) / a;
    const double c = 1.0 - t * t;
    if (c <= 0.0) return 0.0;
    switch (k) {
      case 0: return c * c * c * c;
      case 1: return -8.0 * t * c * c * c / a;
      case 2: return 8.0 * c * c * (7.0 * t * t - 1.0) / (a * a);
      default: return 48.0 * t * c * (3.0 - 7.0 * t * t) / (a * a * a);
    }
  };
  TestFunction tf;
  tf.id = "bump(a=" + num_str(a) + ",c=" + num_str(center) + ")";
  tf.f = [env](double x) { return env(x, 0); };
  tf.d1 = [env](double x) { return env(x, 1); };
  tf.d2 = [env](double x) { return env(x, 2); };
  tf.d3 = [env](double x) { return env(x, 3); };
  tf.kappa = scan_kappa(tf.d2, center - a, center + a);
  return tf;
}

TestFunction truncated_quadratic(double r, double s) {
  const double cend = 0.5 * r * r + 0.5 * s * r + s * s / 7.0;
  auto val = [r, s, cend](double x) {
    const double z = std::abs(x);
    if (z <= r) return 0.5 * x * x;
    if (z >= r + s) return cend;
    const double t = (z - r) / s;
    return 0.5 * r * r + s * r * (t - int_qs(t)) +
           s * s * (0.5 * t * t - int_t_qs(t));
  };
  auto der1 = [r, s](double x) {
    const double z = std::abs(x);
    if (z <= r) return x;
    if (z >= r + s) return 0.0;
    const double t = (z - r) / s;
    const double sign = x < 0.0 ? -1.0 : 1.0;
    return sign * z * (1.0 - qs(t));
  };
  auto der2 = [r, s](double x) {
    const double z = std::abs(x);
    if (z <= r) return 1.0;
    if (z >= r + s) return 0.0;
    const double t = (z - r) / s;
    return (1.0 - qs(t)) - z * qs1(t) / s;
  };
  auto der3 = [r, s](double x) {
    const double z = std::abs(x);
    if (z <= r || z >= r + s) return 0.0;
    const double t = (z - r) / s;
    const double sign = x < 0.0 ? -1.0 : 1.0;
    return sign * (-2.0 * qs1(t) / s - z * qs2(t) / (s * s));
  };
  TestFunction tf;
  tf.id = "half_square(r=" + num_str(r) + ")";
  tf.f = val;
  tf.d1 = der1;
  tf.d2 = der2;
  tf.d3 = der3;
  tf.kappa = scan_kappa(tf.d2, -(r + s), r + s);
  return tf;
}

TestFunction truncated_cubic(double r, double s) {
  auto upper = [r, s](double z) {
    const double t = (z - r) / s;
    return r * r * r / 6.0 +
           0.5 * s *
               (r * r * (t - int_qs(t)) + 2.0 * r * s * (0.5 * t * t - int_t_qs(t)) +
                s * s * (t * t * t / 3.0 - int_t2_qs(t)));
  };
  const double cend = upper(r + s);
  auto val = [r, s, upper, cend](double x) {
    const double z = std::abs(x);
    const double sign = x < 0.0 ? -1.0 : 1.0;
    if (z <= r) return x * x * x / 6.0;
    if (z >= r + s) return sign * cend;
    return sign * upper(z);
  };
  auto der1 = [r, s](double x) {
    const double z = std::abs(x);
    if (z <= r) return 0.5 * x * x;
    if (z >= r + s) return 0.0;
    const double t = (z - r) / s;
    return 0.5 * z * z * (1.0 - qs(t));
  };
  auto der2 = [r, s](double x) {
    const double z = std::abs(x);
    const double sign = x < 0.0 ? -1.0 : 1.0;
    if (z <= r) return x;
    if (z >= r + s) return 0.0;
    const double t = (z - r) / s;
    return sign * (z * (1.0 - qs(t)) - 0.5 * z * z * qs1(t) / s);
  };
  auto der3 = [r, s](double x) {
    const double z = std::abs(x);
    if (z <= r) return 1.0;
    if (z >= r + s) return 0.0;
    const double t = (z - r) / s;
    return (1.0 - qs(t)) - 2.0 * z * qs1(t) / s - 0.5 * z * z * qs2(t) / (s * s);
  };
  TestFunction tf;
  tf.id = "half_cube(r=" + num_str(r) + ")";
  tf.f = val;
  tf.d1 = der1;
  tf.d2 = der2;
  tf.d3 = der3;
  tf.kappa = scan_kappa(tf.d2, -(r + s), r + s);
  return tf;
}

TestFunction windowed_wave(double a, double k) {
  const TestFunction env = polynomial_bump(a, 0.0);
  TestFunction tf;
  tf.id = "wave(k=" + num_str(k) + ")";
  tf.f = [env, k](double x) { return std::sin(k * x) * env.f(x); };
  tf.d1 = [env, k](double x) {
    return k * std::cos(k * x) * env.f(x) + std::sin(k * x) * env.d1(x);
  };
  tf.d2 = [env, k](double x) {
    return -k * k * std::sin(k * x) * env.f(x) +
           2.0 * k * std::cos(k * x) * env.d1(x) + std::sin(k * x) * env.d2(x);
  };
  tf.d3 = [env, k](double x) {
    return -k * k * k * std::cos(k * x) * env.f(x) -
           3.0 * k * k * std::sin(k * x) * env.d1(x) +
           3.0 * k * std::cos(k * x) * env.d2(x) + std::sin(k * x) * env.d3(x);
  };
  tf.kappa = scan_kappa(tf.d2, -a, a);
  return tf;
}

std::vector<TestFunction> standard_test_bank() {
  return {polynomial_bump(3.0, 0.0), polynomial_bump(2.5, 0.9),
          truncated_quadratic(2.5, 1.5), truncated_cubic(2.5, 1.5),
          windowed_wave(3.0, 2.5)};
}

double weak_operator_N(const EulerianDensity& u, const ModelParameters& p,
                       const TestFunction& zeta) {
  require_1d(p, "weak_operator_N");
  if (!zeta.d2 || !zeta.d3) {
    throw InsufficientDerivatives("test function needs second and third derivatives");
  }
  const int G = u.size();
  if (G < 8) throw OutOfRange("weak_operator_N needs at least 8 grid nodes");
  const double h = u.h;
  std::vector<double> sg(G);
  for (int j = 0; j < G; ++j) sg[j] = std::pow(u.u[j], p.alpha);
  double acc = 0.0;
  for (int j = 1; j + 1 < G; ++j) {
    const double x = u.x(j);
    const double s1 = (sg[j + 1] - sg[j - 1]) / (2.0 * h);
    const double s2q = (sg[j + 1] * sg[j + 1] - sg[j - 1] * sg[j - 1]) / (2.0 * h);
    acc += p.alpha * s2q * zeta.d3(x) + (2.0 * p.alpha + 1.0) * s1 * s1 * zeta.d2(x);
  }
  return -acc * h / (2.0 * p.alpha);
}

double hessian_seminorm(const EulerianDensity& u, double alpha) {
  const int G = u.size();
  if (G < 8) throw OutOfRange("hessian_seminorm needs at least 8 grid nodes");
  const double h = u.h;
  double acc = 0.0;
  for (int j = 1; j + 1 < G; ++j) {
    const double s0 = std::pow(u.u[j - 1], alpha);
    const double s1 = std::pow(u.u[j], alpha);
    const double s2 = std::pow(u.u[j + 1], alpha);
    const double dd = (s2 - 2.0 * s1 + s0) / (h * h);
    acc += dd * dd;
  }
  return acc * h;
}

double information_eulerian(const EulerianDensity& u, const ModelParameters& p) {
  require_1d(p, "information_eulerian");
  const int G = u.size();
  if (G < 8) throw OutOfRange("information_eulerian needs at least 8 grid nodes");
  const double h = u.h;
  double fisher = 0.0;
  for (int j = 0; j + 1 < G; ++j) {
    const double ds = (std::pow(u.u[j + 1], p.alpha) - std::pow(u.u[j], p.alpha)) / h;
    fisher += ds * ds;
  }
  double m2 = 0.0;
  for (int j = 0; j < G; ++j) {
    const double w = (j == 0 || j == G - 1) ? 0.5 : 1.0;
    m2 += w * u.x(j) * u.x(j) * u.u[j];
  }
  return fisher * h / (2.0 * p.alpha) + 0.5 * p.lambda * m2 * h;
}

}  // namespace mmflow
