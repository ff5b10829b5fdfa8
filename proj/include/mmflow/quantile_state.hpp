#pragma once

// One-dimensional probability measures in two interchangeable forms:
//  - QuantileDensity: particle i sits at the quantile of mass (i - 1/2)/N,
//    positions strictly increasing.  Wasserstein geometry is flat here.
//  - EulerianDensity: nonnegative values on a uniform grid with unit mass.

#include <cstddef>
#include <vector>

namespace mmflow {

inline constexpr double kGapFloorRel = 1e-12;  // g_min = 1e-12 (X_N - X_1)
inline constexpr int kMinParticles = 8;

class QuantileDensity {
 public:
  // validates: size >= 8, finite, strictly increasing
  explicit QuantileDensity(std::vector<double> positions);

  int n() const { return static_cast<int>(x_.size()); }
  const std::vector<double>& positions() const { return x_; }
  double operator[](int i) const { return x_[static_cast<std::size_t>(i)]; }
  // mass coordinate of particle i (0-based): (i + 1/2)/N
  double mass(int i) const { return (static_cast<double>(i) + 0.5) / n(); }
  double span() const { return x_.back() - x_.front(); }
  double gap_floor() const { return kGapFloorRel * span(); }
  double min_gap() const;

 private:
  std::vector<double> x_;
};

struct EulerianDensity {
  double lo = 0.0;  // position of the first grid node
  double h = 0.0;   // grid spacing
  std::vector<double> u;

  int size() const { return static_cast<int>(u.size()); }
  double x(int j) const { return lo + h * j; }
  double mass() const;  // trapezoid rule
};

// W2 between equal-resolution states: sqrt((1/N) sum (X_i - Y_i)^2)
double wasserstein_distance(const QuantileDensity& a, const QuantileDensity& b);

// pushforward under x -> r x, r > 0
QuantileDensity dilate(const QuantileDensity& a, double r);

// (1/N) sum X_i^2
double second_moment(const QuantileDensity& a);

// Monotone-cubic reconstruction of the density on a uniform grid spanning
// [X_1 - h, X_N + h] with h = (X_N - X_1)/(grid_size - 3); mass renormalized
// to exactly one under the trapezoid rule.
EulerianDensity to_eulerian(const QuantileDensity& a, int grid_size);

// invert the piecewise-quadratic cumulative of a gridded density at midpoint
// masses; plateaus resolve to their left edge
QuantileDensity from_eulerian(const EulerianDensity& u, int n_points);

// trapezoid integral of |u - v| on the shared grid
double l1_distance(const EulerianDensity& u, const EulerianDensity& v);

}  // namespace mmflow
