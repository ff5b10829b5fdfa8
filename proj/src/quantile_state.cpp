#include "mmflow/quantile_state.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mmflow/errors.hpp"
#include "mmflow/util.hpp"

namespace mmflow {

QuantileDensity::QuantileDensity(std::vector<double> positions)
    : x_(std::move(positions)) {
  if (static_cast<int>(x_.size()) < kMinParticles) {
    throw OutOfRange("quantile state needs at least " +
                     std::to_string(kMinParticles) + " particles, got " +
                     std::to_string(x_.size()));
  }
  for (std::size_t i = 0; i < x_.size(); ++i) {
    if (!std::isfinite(x_[i])) {
      throw DegenerateState("nonfinite particle position at index " +
                            std::to_string(i));
    }
    if (i > 0 && !(x_[i] > x_[i - 1])) {
      throw MonotonicityViolation("positions must be strictly increasing at index " +
                                  std::to_string(i));
    }
  }
}

double QuantileDensity::min_gap() const {
  double g = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < x_.size(); ++i) g = std::min(g, x_[i] - x_[i - 1]);
  return g;
}

double EulerianDensity::mass() const {
  if (u.size() < 2) return 0.0;
  double s = 0.0;
  for (double v : u) s += v;
  s -= 0.5 * (u.front() + u.back());
  return s * h;
}

double wasserstein_distance(const QuantileDensity& a, const QuantileDensity& b) {
  if (a.n() != b.n()) {
    throw MismatchedResolution("W2 needs equal particle counts, got " +
                               std::to_string(a.n()) + " and " +
                               std::to_string(b.n()));
  }
  double s = 0.0;
  for (int i = 0; i < a.n(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s / a.n());
}

QuantileDensity dilate(const QuantileDensity& a, double r) {
  if (!(r > 0.0) || !std::isfinite(r)) {
    throw NonpositiveScale("dilation factor must be positive, got " + num_str(r));
  }
  std::vector<double> y(a.positions());
  for (double& v : y) v *= r;
  return QuantileDensity(std::move(y));
}

double second_moment(const QuantileDensity& a) {
  double s = 0.0;
  for (int i = 0; i < a.n(); ++i) s += a[i] * a[i];
  return s / a.n();
}

namespace {

// Fritsch-Carlson slopes for a monotone cubic Hermite interpolant through
// (t_k, y_k); all secants here are nonnegative, so the result is monotone.
std::vector<double> pchip_slopes(const std::vector<double>& t,
                                 const std::vector<double>& y) {
  const std::size_t K = t.size();
  std::vector<double> h(K - 1), sec(K - 1), d(K);
  for (std::size_t k = 0; k + 1 < K; ++k) {
    h[k] = t[k + 1] - t[k];
    sec[k] = (y[k + 1] - y[k]) / h[k];
  }
  for (std::size_t k = 1; k + 1 < K; ++k) {
    if (sec[k - 1] * sec[k] <= 0.0) {
      d[k] = 0.0;
    } else {
      const double w1 = 2.0 * h[k] + h[k - 1];
      const double w2 = h[k] + 2.0 * h[k - 1];
      d[k] = (w1 + w2) / (w1 / sec[k - 1] + w2 / sec[k]);
    }
  }
  auto end_slope = [](double h0, double h1, double s0, double s1) {
    double d0 = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if (d0 * s0 <= 0.0) {
      d0 = 0.0;
    } else if (s0 * s1 < 0.0 && std::abs(d0) > 3.0 * std::abs(s0)) {
      d0 = 3.0 * s0;
    }
    return d0;
  };
  d[0] = end_slope(h[0], h[1], sec[0], sec[1]);
  d[K - 1] = end_slope(h[K - 2], h[K - 3], sec[K - 2], sec[K - 3]);
  return d;
}

// derivative of the cubic Hermite piece on [t_k, t_k + hk] at parameter s
double hermite_deriv(double yk, double yk1, double dk, double dk1, double hk,
                     double s) {
  return (yk * (6.0 * s * s - 6.0 * s) + hk * dk * (3.0 * s * s - 4.0 * s + 1.0) +
          yk1 * (-6.0 * s * s + 6.0 * s) + hk * dk1 * (3.0 * s * s - 2.0 * s)) /
         hk;
}

}  // namespace

EulerianDensity to_eulerian(const QuantileDensity& a, int grid_size) {
  if (grid_size < 32) {
    throw OutOfRange("to_eulerian needs at least 32 grid nodes, got " +
                     std::to_string(grid_size));
  }
  if (a.min_gap() < a.gap_floor()) {
    throw DegenerateState("particle gap below floor, cannot reconstruct density");
  }
  const int N = a.n();
  const int G = grid_size;
  const double h = a.span() / (G - 3);
  const double lo = a[0] - h;

  // cdf knots: zero just left of the support, midpoint masses at the
  // particles, one just right of the support
  std::vector<double> t(N + 2), y(N + 2);
  t[0] = lo;
  y[0] = 0.0;
  for (int i = 0; i < N; ++i) {
    t[i + 1] = a[i];
    y[i + 1] = a.mass(i);
  }
  t[N + 1] = lo + (G - 1) * h;
  y[N + 1] = 1.0;

  const std::vector<double> d = pchip_slopes(t, y);

  EulerianDensity out;
  out.lo = lo;
  out.h = h;
  out.u.assign(G, 0.0);
  std::size_t k = 0;
  for (int j = 0; j < G; ++j) {
    const double x = lo + h * j;
    while (k + 2 < t.size() && t[k + 1] < x) ++k;
    const double hk = t[k + 1] - t[k];
    const double s = std::clamp((x - t[k]) / hk, 0.0, 1.0);
    out.u[j] = std::max(0.0, hermite_deriv(y[k], y[k + 1], d[k], d[k + 1], hk, s));
  }
  const double m = out.mass();
  if (!(m > 0.0) || !std::isfinite(m)) {
    throw DegenerateState("reconstructed density has nonpositive mass");
  }
  for (double& v : out.u) v /= m;
  return out;
}

QuantileDensity from_eulerian(const EulerianDensity& u, int n_points) {
  if (n_points < kMinParticles) {
    throw OutOfRange("from_eulerian needs at least " +
                     std::to_string(kMinParticles) + " particles");
  }
  if (u.size() < 2 || !(u.h > 0.0)) {
    throw GridMismatch("eulerian density needs a uniform grid of >= 2 nodes");
  }
  for (double v : u.u) {
    if (!std::isfinite(v) || v < 0.0) {
      throw MassNotNormalized("density values must be finite and nonnegative");
    }
  }
  const double m = u.mass();
  if (std::abs(m - 1.0) > 1e-4) {
    throw MassNotNormalized("mass " + num_str(m) + " is not within 1e-4 of 1");
  }

  const int G = u.size();
  std::vector<double> c(G, 0.0);
  for (int j = 1; j < G; ++j) {
    c[j] = c[j - 1] + 0.5 * u.h * (u.u[j - 1] + u.u[j]);
  }
  const double total = c[G - 1];
  std::vector<double> q(n_points);
  for (int i = 0; i < n_points; ++i) {
    const double target = (i + 0.5) / n_points * total;
    // first cell edge with cumulative >= target; plateaus resolve leftward
    const auto it = std::lower_bound(c.begin(), c.end(), target);
    if (it == c.begin()) {
      q[i] = u.lo;
      continue;
    }
    const int cell = static_cast<int>(it - c.begin()) - 1;
    const double dm = target - c[cell];
    const double uk = u.u[cell];
    const double du = u.u[cell + 1] - uk;
    const double aa = 0.5 * du / u.h;
    // solve aa s^2 + uk s = dm for s in [0, h], stable quadratic form
    double s;
    const double disc = uk * uk + 4.0 * aa * dm;
    const double denom = uk + std::sqrt(std::max(0.0, disc));
    if (std::abs(aa) < 1e-300 * std::abs(uk) || denom <= 0.0) {
      s = (uk > 0.0) ? dm / uk : 0.0;
    } else {
      s = 2.0 * dm / denom;
    }
    q[i] = u.x(cell) + std::clamp(s, 0.0, u.h);
  }
  for (int i = 1; i < n_points; ++i) {
    if (!(q[i] > q[i - 1])) {
      throw ZeroDensityPlateau(
          "quantiles collide at index " + std::to_string(i) +
          "; the density carries a zero-mass plateau between occupied cells");
    }
  }
  return QuantileDensity(std::move(q));
}

double l1_distance(const EulerianDensity& u, const EulerianDensity& v) {
  if (u.size() != v.size() || std::abs(u.h - v.h) > 1e-12 * u.h ||
      std::abs(u.lo - v.lo) > 1e-9 * u.h) {
    throw GridMismatch("l1_distance needs identical grids");
  }
  double s = 0.0;
  for (int j = 0; j < u.size(); ++j) {
    const double d = std::abs(u.u[j] - v.u[j]);
    s += (j == 0 || j == u.size() - 1) ? 0.5 * d : d;
  }
  return s * u.h;
}

}  // namespace mmflow
