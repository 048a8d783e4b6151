#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "delayctrl/simulation.hpp"
#include "delayctrl/spectral.hpp"

using namespace delayctrl;

namespace {
InitialState const_state(const GridSpec& grid, double y, double x0_value) {
  return make_state(grid, y, [=](double) { return x0_value; });
}
}  // namespace

TEST_CASE("zero data gives the zero trajectory") {
  const DelayEquation eq = DelayEquation::simplest(1.0);
  const GridSpec grid{1000};
  const auto u = ControlSignal::zero(2.0, 0.5, grid);
  const auto traj = simulate(eq, const_state(grid, 0.0, 0.0), u, 2.0, grid);
  CHECK(traj.values.max_abs() == 0.0);
  CHECK_FALSE(traj.deriv.has_value());
}

TEST_CASE("unit step cascade: x = 1 then 1 + (t-1)") {
  const DelayEquation eq = DelayEquation::simplest(1.0);
  const GridSpec grid{1000};
  const auto u = ControlSignal::zero(2.0, 0.5, grid);
  const auto traj = simulate(eq, const_state(grid, 1.0, 0.0), u, 2.0, grid);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < traj.values.size(); ++i) {
    const double t = traj.values.node(i);
    if (t < 0.0) continue;
    const double exact = (t <= 1.0) ? 1.0 : 1.0 + (t - 1.0);
    worst = std::max(worst, std::abs(traj.values[i] - exact));
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("M^2 jump state: y=0, x0=1 integrates to x(t)=t") {
  const DelayEquation eq = DelayEquation::simplest(1.0);
  const GridSpec grid{1000};
  const auto u = ControlSignal::zero(1.0, 0.5, grid);
  const auto traj = simulate(eq, const_state(grid, 0.0, 1.0), u, 1.0, grid);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < traj.values.size(); ++i) {
    const double t = traj.values.node(i);
    if (t < 0.0) continue;
    worst = std::max(worst, std::abs(traj.values[i] - t));
  }
  CHECK(worst <= 1e-12);  // integrand piecewise constant; trapezoid exact
}

TEST_CASE("free trajectory closed forms") {
  const DelayEquation eq = DelayEquation::simplest(1.0);
  const GridSpec grid{1000};

  const auto zero = free_trajectory(eq, const_state(grid, 0.0, 0.0), 0.5, grid);
  CHECK(zero.max_abs() == 0.0);

  const auto one = free_trajectory(eq, const_state(grid, 1.0, 0.0), 0.5, grid);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < one.size(); ++i) worst = std::max(worst, std::abs(one[i] - 1.0));
  CHECK(worst <= 1e-14);

  const auto ramp = free_trajectory(eq, const_state(grid, 1.0, 1.0), 1.0, grid);
  worst = 0.0;
  for (Eigen::Index i = 0; i < ramp.size(); ++i)
    worst = std::max(worst, std::abs(ramp[i] - (1.0 + ramp.node(i))));
  CHECK(worst <= 1e-8);
}

TEST_CASE("free trajectory preconditions") {
  const DelayEquation eq = DelayEquation::simplest(1.0);
  const GridSpec grid{1000};
  CHECK_THROWS_AS(free_trajectory(eq, const_state(grid, 1.0, 0.0), 1.5, grid), ConfigError);

  Vector r(2), a(2), d(1);
  r << 0.0, 1.0;
  a << 0.0, 1.0;
  d << 0.5;
  const DelayEquation neutral(r, a, d);
  InitialState no_deriv = const_state(grid, 1.0, 1.0);
  CHECK_THROWS_AS(free_trajectory(neutral, no_deriv, 0.5, grid), MissingDerivative);
}

TEST_CASE("free trajectory agrees with simulate at u = 0") {
  Vector r(3), a(3), d(2);
  r << 0.0, 0.4, 1.0;
  a << 0.3, -1.2, 0.7;
  d << -0.2, 0.3;
  const DelayEquation eq(r, a, d);
  const GridSpec grid = GridSpec::for_equation(eq, 0.2, 1e-3);
  const Polynomial p{(Vector(4) << 0.6, -0.8, 0.25, 0.4).finished()};
  const InitialState state = make_poly_state(grid, p(0.0), p, true);

  const auto xfree = free_trajectory(eq, state, 0.4, grid);
  const auto traj = simulate(eq, state, ControlSignal::zero(0.4, 0.2, grid), 0.4, grid);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < xfree.size(); ++i) {
    const double t = xfree.node(i);
    worst = std::max(worst, std::abs(xfree[i] - traj.values[traj.values.index_at(t)]));
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("linearity of the trajectory in the control") {
  const DelayEquation eq = DelayEquation::simplest(-0.8);
  const GridSpec grid{500};
  const InitialState state = const_state(grid, 0.7, -0.4);
  const double T = 1.5;
  auto mk = [&](const std::function<double(double)>& f) {
    std::vector<ControlSegment> segs{
        {make_grid_function(0.0, T, grid.index_of(T), f), SegmentLabel::generator, 0}};
    return ControlSignal(T, 0.5, make_grid_function(0.0, 0.5, grid.index_of(0.5), f), segs);
  };
  const auto u1 = mk([](double t) { return std::sin(3.0 * t); });
  const auto u2 = mk([](double t) { return t * t - 0.5; });
  const double alpha = 1.3, beta = -0.6;
  const auto mix = mk([&](double t) {
    return alpha * std::sin(3.0 * t) + beta * (t * t - 0.5);
  });

  const auto t_mix = simulate(eq, state, mix, T, grid);
  const auto t1 = simulate(eq, state, u1, T, grid);
  const auto t2 = simulate(eq, state, u2, T, grid);
  const auto t0 = simulate(eq, state, ControlSignal::zero(T, 0.5, grid), T, grid);

  double worst = 0.0;
  for (Eigen::Index i = 0; i < t_mix.values.size(); ++i) {
    const double expected = alpha * t1.values[i] + beta * t2.values[i] +
                            (1.0 - alpha - beta) * t0.values[i];
    worst = std::max(worst, std::abs(t_mix.values[i] - expected));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("exponential modes are reproduced (superposition with spectrum)") {
  const DelayEquation eq = DelayEquation::simplest(1.0);
  // omega constant: Omega e^Omega = 1
  double omega = 0.5;
  for (int it = 0; it < 60; ++it)
    omega -= (omega * std::exp(omega) - 1.0) / ((1.0 + omega) * std::exp(omega));
  const Complex z(0.0, -omega);
  CHECK(std::abs(char_function(eq, z)) <= 1e-12);
  CHECK(mode_check(eq, z, 1.5, 20000) <= 1e-6);
}

TEST_CASE("simulation order of accuracy >= 1.9") {
  Vector r(2), a(2), d(1);
  r << 0.0, 1.0;
  a << 0.4, 1.1;
  d << 0.35;
  const DelayEquation eq(r, a, d);
  const Polynomial p{(Vector(3) << 1.0, 0.5, -0.3).finished()};
  auto run = [&](long per_unit) {
    const GridSpec grid{per_unit};
    const InitialState state = make_poly_state(grid, p(0.0), p, true);
    const auto traj =
        simulate(eq, state, ControlSignal::zero(2.0, 0.5, grid), 2.0, grid);
    return traj.values[traj.values.size() - 1];
  };
  const double base = run(4000);
  const double err1 = std::abs(run(250) - base);
  const double err2 = std::abs(run(500) - base);
  const double err4 = std::abs(run(1000) - base);
  CHECK(std::log2(err1 / err2) >= 1.9);
  CHECK(std::log2(err2 / err4) >= 1.9);
}

TEST_CASE("system cascade: zero state, scalar reduction, hand integration") {
  const GridSpec grid{1000};

  // all-zero state
  const RetardedSystem sys1 = RetardedSystem::companion((Vector(1) << -1.0).finished());
  SystemInitialState zero{Vector::Zero(1), {RealGridFunction::zero(-1.0, 0.0, grid.per_unit)}};
  const auto z = simulate_system(sys1, zero, ControlSignal::zero(2.0, 0.5, grid), 2.0, grid);
  CHECK(z.components[0].max_abs() == 0.0);

  // n=1 with g_1 = -1 is x' = x(t-1) + u
  SystemInitialState s1{(Vector(1) << 1.0).finished(),
                        {RealGridFunction::zero(-1.0, 0.0, grid.per_unit)}};
  const auto sys_traj = simulate_system(sys1, s1, ControlSignal::zero(2.0, 0.5, grid), 2.0, grid);
  const DelayEquation eq = DelayEquation::simplest(1.0);
  const auto scalar_traj =
      simulate(eq, const_state(grid, 1.0, 0.0), ControlSignal::zero(2.0, 0.5, grid), 2.0, grid);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < sys_traj.components[0].size(); ++i)
    worst = std::max(worst, std::abs(sys_traj.components[0][i] - scalar_traj.values[i]));
  CHECK(worst <= 1e-10);

  // n=2, g=0, y=(1,1), x0=0: x_1 = 1; x_2 = 1 on [0,1], then slope 1
  const RetardedSystem sys2 = RetardedSystem::companion(Vector::Zero(2));
  SystemInitialState s2{(Vector(2) << 1.0, 1.0).finished(),
                        {RealGridFunction::zero(-1.0, 0.0, grid.per_unit),
                         RealGridFunction::zero(-1.0, 0.0, grid.per_unit)}};
  const auto traj2 = simulate_system(sys2, s2, ControlSignal::zero(2.0, 0.5, grid), 2.0, grid);
  double w1 = 0.0, w2 = 0.0;
  for (Eigen::Index i = 0; i < traj2.components[0].size(); ++i) {
    const double t = traj2.components[0].node(i);
    if (t < 0.0) continue;
    w1 = std::max(w1, std::abs(traj2.components[0][i] - 1.0));
    const double x2 = (t <= 1.0) ? 1.0 : t;  // continuity at t=1, slope x_1(t-1)=1
    w2 = std::max(w2, std::abs(traj2.components[1][i] - x2));
  }
  CHECK(w1 <= 1e-12);
  CHECK(w2 <= 1e-10);
}

TEST_CASE("null_residual reads the tail window") {
  const Trajectory<double> ones{RealGridFunction::constant(-1.0, 1.5, 500, 1.0), std::nullopt};
  CHECK(null_residual(ones, 1.5) == doctest::Approx(1.0));

  const Trajectory<double> zeros{RealGridFunction::zero(-1.0, 1.5, 500), std::nullopt};
  CHECK(null_residual(zeros, 1.5) == 0.0);
  CHECK_THROWS_AS(null_residual(zeros, 2.0), HorizonExceeded);
}

TEST_CASE("simulate rejects horizon overruns and unvalidated states") {
  const DelayEquation eq = DelayEquation::simplest(1.0);
  const GridSpec grid{500};
  const auto u = ControlSignal::zero(1.0, 0.5, grid);
  CHECK_THROWS_AS(simulate(eq, const_state(grid, 0.0, 0.0), u, 1.5, grid), HorizonExceeded);

  Vector r(2), a(2), d(1);
  r << 0.0, 1.0;
  a << 0.0, 1.0;
  d << 0.4;
  const DelayEquation neutral(r, a, d);
  CHECK_THROWS_AS(simulate(neutral, const_state(grid, 1.0, 0.0), u, 1.0, grid),
                  MissingDerivative);
  const std::function<double(double)> dzero = [](double) { return 0.0; };
  const InitialState incompatible =
      make_state(grid, 1.0, [](double) { return 0.0; }, &dzero);
  CHECK_THROWS_AS(simulate(neutral, incompatible, u, 1.0, grid), CompatibilityViolation);
}
