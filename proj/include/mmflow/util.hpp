#pragma once

// Shared numeric helpers: a deterministic RNG with fixed sampling algorithms,
// adaptive quadrature, the standard normal quantile, and shortest round-trip
// float formatting for reproducible text output.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mmflow/errors.hpp"

namespace mmflow {

inline constexpr double kPi = 3.14159265358979323846;

// mt19937_64 with hand-rolled transforms; std::uniform_real_distribution and
// std::normal_distribution are implementation-defined, which would break
// byte-identical reruns across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // [0,1), 53 bit mantissa
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

namespace detail {

inline double simpson_rec(const std::function<double(double)>& f, double a,
                          double b, double fa, double fm, double fb,
                          double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

inline double adaptive_simpson(const std::function<double(double)>& f,
                               double a, double b, double tol = 1e-12,
                               int max_depth = 48) {
  if (a == b) return 0.0;
  const double fa = f(a);
  const double fm = f(0.5 * (a + b));
  const double fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

// standard normal cdf
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Inverse standard normal cdf: bracketed bisection followed by Newton polish.
// Deterministic and accurate to ~1 ulp of the cdf inversion for p away from
// the extreme denormal tails, which is all the quantile grids need.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw OutOfRange("normal_quantile needs p in (0,1)");
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (normal_cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double x = 0.5 * (lo + hi);
  for (int i = 0; i < 4; ++i) {
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
    if (pdf <= 0.0) break;
    const double step = (normal_cdf(x) - p) / pdf;
    if (!std::isfinite(step)) break;
    x -= step;
  }
  return x;
}

// shortest round-trip decimal form, identical across runs
inline std::string num_str(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  out += '\n';
  return out;
}

// simple ordinary least squares of y against x; returns {slope, intercept}
inline std::pair<double, double> linear_fit(const std::vector<double>& x,
                                            const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InsufficientSignal("linear_fit needs at least two samples");
  }
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0) throw InsufficientSignal("linear_fit abscissae are all equal");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

}  // namespace mmflow
