#include <doctest.h>

#include <cmath>
#include <vector>

#include "mmflow/barenblatt.hpp"
#include "mmflow/errors.hpp"
#include "mmflow/functionals.hpp"
#include "mmflow/jko.hpp"
#include "mmflow/model_params.hpp"
#include "mmflow/quantile_state.hpp"
#include "mmflow/reference_flows.hpp"
#include "mmflow/util.hpp"

using namespace mmflow;

namespace {

QuantileDensity gaussian_quantiles(int n, double mean = 0.0, double sd = 1.0) {
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    x[static_cast<std::size_t>(i)] = mean + sd * normal_quantile((i + 0.5) / n);
  }
  return QuantileDensity(std::move(x));
}

// random monotone state with healthy gaps, centered
std::vector<double> seeded_positions(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(static_cast<std::size_t>(n));
  double pos = 0.0;
  for (int i = 0; i < n; ++i) {
    pos += (0.3 + 0.7 * rng.uniform()) * 2.0 / n;
    x[static_cast<std::size_t>(i)] = pos;
  }
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  for (double& v : x) v -= mean;
  return x;
}

// objective value reconstructed from public pieces
double objective_value(const std::vector<double>& x, const QuantileDensity& prev,
                       double tau, FunctionalKind kind,
                       const ModelParameters& p) {
  double q = 0.0;
  for (int i = 0; i < prev.n(); ++i) {
    const double d = x[static_cast<std::size_t>(i)] - prev[i];
    q += d * d;
  }
  q /= 2.0 * tau * prev.n();
  return q + functional_value(QuantileDensity(std::vector<double>(x)), kind, p);
}

}  // namespace

TEST_SUITE("jko_core") {

TEST_CASE("uniform and geometric partitions") {
  const Partition u = uniform_partition(1e-3, 5);
  CHECK(u.steps() == 5);
  REQUIRE(u.t.size() == 6);
  CHECK(u.t.front() == 0.0);
  CHECK(u.horizon() == doctest::Approx(5e-3).epsilon(1e-14));
  for (double tau : u.tau) CHECK(tau == 1e-3);

  const Partition g = geometric_partition(1e-3, 1.5, 4);
  CHECK(g.tau[0] == doctest::Approx(1e-3).epsilon(1e-15));
  CHECK(g.tau[3] == doctest::Approx(1e-3 * 1.5 * 1.5 * 1.5).epsilon(1e-14));
  CHECK(g.t[4] == doctest::Approx(1e-3 * (1.0 + 1.5 + 2.25 + 3.375)).epsilon(1e-14));

  const Partition empty = uniform_partition(1e-3, 0);
  CHECK(empty.steps() == 0);
  CHECK(empty.t.size() == 1);

  CHECK_THROWS_AS(uniform_partition(0.0, 3), OutOfRange);
  CHECK_THROWS_AS(uniform_partition(1e-3, -1), OutOfRange);
  CHECK_THROWS_AS(geometric_partition(1e-3, 0.0, 3), OutOfRange);
  CHECK_THROWS_AS(geometric_partition(-1e-3, 1.1, 3), OutOfRange);
}

TEST_CASE("solver configuration gates") {
  JkoConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.inner_grad_tol = 0.0;
  CHECK_THROWS_AS(validate(cfg), OutOfRange);
  cfg = JkoConfig{};
  cfg.inner_max_iter = 10;
  CHECK_THROWS_AS(validate(cfg), OutOfRange);
  cfg = JkoConfig{};
  cfg.eulerian_grid_size = 16;
  CHECK_THROWS_AS(validate(cfg), OutOfRange);
  cfg = JkoConfig{};
  cfg.ls_contraction = 1.0;
  CHECK_THROWS_AS(validate(cfg), OutOfRange);
}

TEST_CASE("objective gradient matches central finite differences") {
  const int n = 40;
  const double tau = 1e-3;
  const QuantileDensity prev = gaussian_quantiles(n, 0.0, 0.9);
  const ModelParameters p = derive_params(0.75, 1.0, 1);
  for (FunctionalKind kind :
       {FunctionalKind::fourth_order, FunctionalKind::second_order}) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const std::vector<double> x = seeded_positions(n, seed);
      const std::vector<double> g = objective_gradient(x, prev, tau, kind, p);
      double gmax = 0.0;
      for (double v : g) gmax = std::max(gmax, std::abs(v));
      const double h = 1e-6;
      double worst = 0.0;
      for (int i = 0; i < n; ++i) {
        std::vector<double> xp = x, xm = x;
        xp[static_cast<std::size_t>(i)] += h;
        xm[static_cast<std::size_t>(i)] -= h;
        const double fd = (objective_value(xp, prev, tau, kind, p) -
                           objective_value(xm, prev, tau, kind, p)) /
                          (2.0 * h);
        worst = std::max(worst, std::abs(fd - g[static_cast<std::size_t>(i)]));
      }
      CHECK(worst <= 1e-6 * (1.0 + gmax));
    }
  }
}

TEST_CASE("transport term of the objective gradient is (x - prev)/(tau N)") {
  const int n = 32;
  const double tau = 5e-3;
  const ModelParameters p = derive_params(0.6, 2.0, 1);
  const QuantileDensity prev = gaussian_quantiles(n);
  const std::vector<double> x = seeded_positions(n, 7);
  const std::vector<double> full =
      objective_gradient(x, prev, tau, FunctionalKind::fourth_order, p);
  const std::vector<double> drive =
      functional_gradient(x, FunctionalKind::fourth_order, p);
  for (int i = 0; i < n; ++i) {
    const double expected =
        (x[static_cast<std::size_t>(i)] - prev[i]) / (tau * n);
    CHECK(full[static_cast<std::size_t>(i)] -
              drive[static_cast<std::size_t>(i)] ==
          doctest::Approx(expected).epsilon(1e-12).scale(1e-12));
  }
}

TEST_CASE("gradient gates") {
  const QuantileDensity prev = gaussian_quantiles(16);
  std::vector<double> x = seeded_positions(12, 3);
  const ModelParameters p = derive_params(0.75, 1.0, 1);
  CHECK_THROWS_AS(
      objective_gradient(x, prev, 1e-3, FunctionalKind::fourth_order, p),
      MismatchedResolution);
  x = seeded_positions(16, 3);
  CHECK_THROWS_AS(
      objective_gradient(x, prev, 0.0, FunctionalKind::fourth_order, p),
      OutOfRange);
}

TEST_CASE("discrete equilibrium is a fixed point of the step map") {
  const ModelParameters p = derive_params(0.75, 1.0, 1);
  for (FunctionalKind kind :
       {FunctionalKind::fourth_order, FunctionalKind::second_order}) {
    const DiscreteEquilibrium eq = equilibrium_state(p, 64, kind, 1e-10, 40000);
    REQUIRE(eq.grad_norm <= 1e-9);
    JkoConfig cfg;
    QuantileDensity state = eq.state;
    double drift = 0.0;
    for (int k = 0; k < 5; ++k) {
      auto [next, rec] = jko_step(state, 1e-3, kind, p, cfg);
      drift = std::max(drift, wasserstein_distance(next, eq.state));
      state = std::move(next);
    }
    CHECK(drift <= 1e-7);
  }
}

TEST_CASE("each step decreases the driving functional and obeys the energy chain") {
  const ModelParameters p = derive_params(0.75, 1.0, 1);
  const QuantileDensity init = gaussian_quantiles(60, 0.4, 0.6);
  JkoConfig cfg;
  const Partition part = uniform_partition(2e-3, 25);
  const Trajectory tr =
      run_trajectory(init, part, FunctionalKind::fourth_order, p, cfg);
  REQUIRE(static_cast<int>(tr.records.size()) == 25);
  double chain = 0.0;
  for (const JkoStepRecord& rec : tr.records) {
    CHECK(rec.f_after <= rec.f_before + 1e-12 * (1.0 + std::abs(rec.f_before)));
    // full objective decrease against staying put
    CHECK(rec.w2sq / (2.0 * rec.tau) + rec.f_after <=
          rec.f_before + 1e-12 * (1.0 + std::abs(rec.f_before)));
    CHECK_FALSE(rec.floor_hit);
    chain += rec.w2sq / (2.0 * rec.tau);
  }
  const double f0 = tr.records.front().f_before;
  const double fN = tr.records.back().f_after;
  CHECK(chain <= f0 - fN + 1e-9 * (1.0 + std::abs(f0)));
}

TEST_CASE("optimality turns the step into the second-moment identity") {
  // (1 + 2 lambda tau) m2^n + W2^2 = m2^{n-1} - 2 tau D0[M^n] at the minimizer
  const QuantileDensity init = gaussian_quantiles(50, -0.2, 0.8);
  JkoConfig cfg;
  for (FunctionalKind kind :
       {FunctionalKind::fourth_order, FunctionalKind::second_order}) {
    const double alpha = kind == FunctionalKind::fourth_order ? 0.75 : 0.5;
    const ModelParameters p = derive_params(alpha, 1.5, 1);
    QuantileDensity state = init;
    const double tau = 1e-3;
    for (int k = 0; k < 3; ++k) {
      const double m2_prev = second_moment(state);
      auto [next, rec] = jko_step(state, tau, kind, p, cfg);
      const double d0 = detail::unconfined_dilation_derivative(
          next.positions(), p, kind == FunctionalKind::second_order);
      // confinement coefficient of the driving functional: lambda for the
      // information energy, capital lambda for the entropy
      const double conf = kind == FunctionalKind::fourth_order
                              ? p.lambda
                              : p.capital_lambda;
      const double lhs = (1.0 + 2.0 * conf * tau) * rec.m2 + rec.w2sq;
      const double rhs = m2_prev - 2.0 * tau * d0;
      CHECK(std::abs(lhs - rhs) <= 1e-5 * std::max(1.0, m2_prev));
      state = std::move(next);
    }
  }
}

TEST_CASE("unconfined dilation derivative: finite differences and alpha = 1/2") {
  const QuantileDensity a = gaussian_quantiles(40, 0.1, 1.2);
  for (bool second : {false, true}) {
    for (double alpha : {0.5, 0.75, 1.0}) {
      const ModelParameters p = derive_params(alpha, 2.0, 1);
      const ModelParameters p0 = derive_params(alpha, 0.0, 1);
      const double h = 1e-6;
      const FunctionalKind kind =
          second ? FunctionalKind::second_order : FunctionalKind::fourth_order;
      const double fd = (functional_value(dilate(a, 1.0 + h), kind, p0) -
                         functional_value(dilate(a, 1.0 - h), kind, p0)) /
                        (2.0 * h);
      const double d0 =
          detail::unconfined_dilation_derivative(a.positions(), p, second);
      CHECK(d0 == doctest::Approx(fd).epsilon(1e-6).scale(1e-9));
    }
  }
  // boltzmann entropy loses exactly log r under dilation: derivative -1/2
  const ModelParameters ph = derive_params(0.5, 1.0, 1);
  CHECK(detail::unconfined_dilation_derivative(a.positions(), ph, true) ==
        doctest::Approx(-0.5).epsilon(1e-14));
}

TEST_CASE("zero-step trajectory carries only the initial state") {
  const ModelParameters p = derive_params(0.75, 1.0, 1);
  const QuantileDensity init = gaussian_quantiles(32);
  const Trajectory tr =
      run_trajectory(init, uniform_partition(1e-3, 0),
                     FunctionalKind::fourth_order, p, JkoConfig{});
  CHECK(tr.states.size() == 1);
  CHECK(tr.records.empty());
  CHECK(wasserstein_distance(tr.states[0], init) == 0.0);
}

TEST_CASE("trajectories are bitwise deterministic") {
  const ModelParameters p = derive_params(0.75, 1.0, 1);
  const QuantileDensity init = gaussian_quantiles(48, 0.3, 0.7);
  const Partition part = uniform_partition(2e-3, 10);
  const JkoConfig cfg;
  const Trajectory a =
      run_trajectory(init, part, FunctionalKind::fourth_order, p, cfg);
  const Trajectory b =
      run_trajectory(init, part, FunctionalKind::fourth_order, p, cfg);
  REQUIRE(a.states.size() == b.states.size());
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    for (int i = 0; i < a.states[k].n(); ++i) {
      CHECK(a.states[k][i] == b.states[k][i]);
    }
  }
}

TEST_CASE("second-order flow tracks the gaussian variance oracle") {
  const ModelParameters p = derive_params(0.5, 1.0, 1);
  const double sigma0_sq = 0.25;
  const int n = 200;
  const QuantileDensity init = gaussian_quantiles(n, 0.0, std::sqrt(sigma0_sq));
  const double tau = 2e-3;
  const int steps = 250;  // horizon 0.5
  const Trajectory tr = run_trajectory(init, uniform_partition(tau, steps),
                                       FunctionalKind::second_order, p,
                                       JkoConfig{});
  const double m2_start = second_moment(tr.states.front());
  const double m2_end = second_moment(tr.states.back());
  const double oracle = ou_variance_oracle(sigma0_sq, tau * steps, p);
  CHECK(m2_end / m2_start ==
        doctest::Approx(oracle / sigma0_sq).epsilon(0.02));
}

TEST_CASE("equilibria of the two functionals nearly coincide") {
  const ModelParameters p = derive_params(0.75, 1.0, 1);
  const DiscreteEquilibrium ef =
      equilibrium_state(p, 64, FunctionalKind::fourth_order, 1e-10, 40000);
  const DiscreteEquilibrium eh =
      equilibrium_state(p, 64, FunctionalKind::second_order, 1e-10, 40000);
  CHECK(wasserstein_distance(ef.state, eh.state) <= 2e-2);
  CHECK(ef.f_value == doctest::Approx(information(ef.state, p)).epsilon(1e-14));
  CHECK(eh.h_value == doctest::Approx(entropy(eh.state, p)).epsilon(1e-14));
  CHECK(ef.f_value <= information(eh.state, p) + 1e-10);
  CHECK(eh.h_value <= entropy(ef.state, p) + 1e-10);
  CHECK_THROWS_AS(
      equilibrium_state(derive_params(0.75, 0.0, 1), 64,
                        FunctionalKind::fourth_order),
      NoStationaryState);
}

TEST_CASE("step gates") {
  const QuantileDensity prev = gaussian_quantiles(16);
  const ModelParameters p = derive_params(0.75, 1.0, 1);
  const JkoConfig cfg;
  CHECK_THROWS_AS(jko_step(prev, 0.0, FunctionalKind::fourth_order, p, cfg),
                  OutOfRange);
  CHECK_THROWS_AS(
      jko_step(prev, 1e-3, FunctionalKind::fourth_order,
               derive_params(0.75, 1.0, 2), cfg),
      BadDimension);
  JkoConfig bad;
  bad.inner_grad_tol = -1.0;
  CHECK_THROWS_AS(jko_step(prev, 1e-3, FunctionalKind::fourth_order, p, bad),
                  OutOfRange);
}

}  // TEST_SUITE
