#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "delayctrl/oracle.hpp"

using namespace delayctrl;

namespace {
InitialState const_state(const GridSpec& grid, double y, double x0_value) {
  return make_state(grid, y, [=](double) { return x0_value; });
}
}  // namespace

TEST_CASE("kkt_solve: zero data gives the zero minimizer") {
  const DelayEquation eq = DelayEquation::simplest(1.0);
  const GridSpec grid{400};
  const auto qp = qp_from_equation(eq, const_state(grid, 0.0, 0.0), 0.5, grid);
  const auto u = kkt_solve(qp);
  CHECK(u.max_abs() <= 1e-12);
}

TEST_CASE("kkt_solve: pure moment problem has the constant minimizer") {
  // no quadratic tail: min ||u||^2 s.t. int_0^0.5 u = -1  =>  u = -2
  QuadraticProgram qp;
  const GridSpec grid{400};
  const long m = grid.index_of(0.5);
  qp.t0 = 0.0;
  qp.t1 = 0.5;
  qp.weights = trapezoid_weights(m + 1, grid.h());
  qp.constraint_rows = qp.weights.transpose();
  qp.constraint_rhs = (Vector(1) << -1.0).finished();
  const auto u = kkt_solve(qp);
  double worst = 0.0;
  for (Eigen::Index i = 0; i <= m; ++i) worst = std::max(worst, std::abs(u[i] + 2.0));
  CHECK(worst <= 1e-10);
}

TEST_CASE("kkt_solve matches Theorem-1 closed form on the worked example") {
  const DelayEquation eq = DelayEquation::simplest(1.0);
  const GridSpec grid{4000};  // h = 2.5e-4
  const auto qp = qp_from_equation(eq, const_state(grid, 1.0, 0.0), 0.5, grid);
  const auto u = kkt_solve(qp);

  const double coth_half = std::cosh(0.5) / std::sinh(0.5);
  double diff_sq = 0.0, ref_sq = 0.0;
  const double h = grid.h();
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double t = u.node(i);
    const double exact = std::sinh(t) - coth_half * std::cosh(t);
    const double w = (i == 0 || i == u.size() - 1) ? 0.5 * h : h;
    diff_sq += w * (u[i] - exact) * (u[i] - exact);
    ref_sq += w * exact * exact;
  }
  CHECK(std::sqrt(diff_sq / ref_sq) <= 1e-3);
  CHECK(qp.constraint_residual(u.data()).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("kkt optimality against feasible perturbations") {
  Vector r(2), a(2), d(1);
  r << 0.0, 1.0;
  a << 0.3, 1.2;
  d << 0.4;
  const DelayEquation eq(r, a, d);
  const GridSpec grid{500};
  const Polynomial p{(Vector(3) << 0.8, -0.5, 0.2).finished()};
  const InitialState state = make_poly_state(grid, p(0.0), p, true);
  const auto qp = qp_from_equation(eq, state, 0.25, grid);
  const auto u = kkt_solve(qp);
  const double base = qp.objective(u.data());

  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::Index n = u.size();
  for (int trial = 0; trial < 50; ++trial) {
    Vector delta(n);
    for (Eigen::Index i = 0; i < n; ++i) delta[i] = gauss(rng);
    // project onto the constraint null space, Euclidean rows
    const Matrix k = qp.constraint_rows;
    delta -= k.transpose() * (k * k.transpose()).ldlt().solve(k * delta);
    const double scale = std::pow(10.0, -6.0 + 6.0 * (trial / 50.0));
    delta *= scale / std::max(1e-300, delta.norm());
    const double perturbed = qp.objective(u.data() + delta);
    CHECK(perturbed >= base - 1e-12 * std::max(1.0, base));
    if (delta.norm() >= 1e-6) CHECK(perturbed > base);
  }
}

TEST_CASE("volterra_solve basics") {
  const GridSpec grid{1000};
  const long m = grid.index_of(0.5);
  const auto zero_kernel = RealGridFunction::zero(0.0, 0.5, m);
  const auto rhs =
      make_grid_function(0.0, 0.5, m, [](double t) { return std::sin(3.0 * t); });

  // k = 0: identity operator, bit-exact
  const auto u = volterra_solve(zero_kernel, rhs, 0.25);
  for (Eigen::Index i = 0; i <= m; ++i) CHECK(u[i] == rhs[i] + 0.25);

  // resolvent of the t-kernel: u - t*u = 1  =>  u = cosh t
  const auto tk = make_grid_function(0.0, 0.5, m, [](double t) { return t; });
  const auto ch = volterra_solve(tk, RealGridFunction::zero(0.0, 0.5, m), 1.0);
  double worst = 0.0;
  for (Eigen::Index i = 0; i <= m; ++i)
    worst = std::max(worst, std::abs(ch[i] - std::cosh(ch.node(i))));
  CHECK(worst <= 1e-6);
}

TEST_CASE("volterra_solve reproduces the worked optimal generator") {
  // u - t*u = t + c with c = -coth(1/2): u = sinh t - coth(1/2) cosh t
  const GridSpec grid{2000};
  const long m = grid.index_of(0.5);
  const auto tk = make_grid_function(0.0, 0.5, m, [](double t) { return t; });
  const auto rhs = make_grid_function(0.0, 0.5, m, [](double t) { return t; });
  const double c = -std::cosh(0.5) / std::sinh(0.5);
  const auto u = volterra_solve(tk, rhs, c);
  double worst = 0.0;
  for (Eigen::Index i = 0; i <= m; ++i) {
    const double t = u.node(i);
    worst = std::max(worst, std::abs(u[i] - (std::sinh(t) + c * std::cosh(t))));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("constant_search pins the Theorem-1 constant") {
  const DelayEquation eq = DelayEquation::simplest(1.0);
  const GridSpec grid{2000};
  const InitialState st = const_state(grid, 1.0, 0.0);
  const auto mc = moment_constraints(eq, st, 0.5, grid);
  const auto vp = volterra_problem_simplest(1.0, st, 0.5, grid);
  auto family = [&](double c) { return volterra_solve(vp.kernel, vp.rhs + vp.mode * c, 0.0); };
  const auto [c, u] = constant_search(family, mc);
  CHECK(c == doctest::Approx(-std::cosh(0.5) / std::sinh(0.5)).epsilon(1e-6));
  CHECK(mc.residual(u).cwiseAbs().maxCoeff() <= 1e-12);

  // already-feasible at c = 0: zero state
  const InitialState z = const_state(grid, 0.0, 0.0);
  const auto mcz = moment_constraints(eq, z, 0.5, grid);
  const auto vpz = volterra_problem_simplest(1.0, z, 0.5, grid);
  auto famz = [&](double c) { return volterra_solve(vpz.kernel, vpz.rhs + vpz.mode * c, 0.0); };
  const auto [cz, uz] = constant_search(famz, mcz);
  CHECK(cz == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(uz.max_abs() <= 1e-12);
}

TEST_CASE("volterra route agrees with kkt on all three classes") {
  const GridSpec grid{1000};

  // simplest
  {
    const DelayEquation eq = DelayEquation::simplest(1.0);
    const InitialState st = const_state(grid, 1.0, 0.0);
    const auto kkt = kkt_solve(qp_from_equation(eq, st, 0.5, grid));
    const auto vol = volterra_route_scalar(eq, st, 0.5, grid);
    CHECK((kkt - vol).norm_l2() / vol.norm_l2() <= 1e-3);
  }

  // neutral
  {
    Vector r(2), a(2), d(1);
    r << 0.0, 1.0;
    a << 0.2, 1.0;
    d << 0.5;
    const DelayEquation eq(r, a, d);
    const Polynomial p{(Vector(2) << 1.0, 1.0).finished()};
    const InitialState st = make_poly_state(grid, p(0.0), p, true);
    const auto kkt = kkt_solve(qp_from_equation(eq, st, 0.3, grid));
    const auto vol = volterra_route_scalar(eq, st, 0.3, grid);
    CHECK((kkt - vol).norm_l2() / vol.norm_l2() <= 1e-3);
  }

  // system
  {
    const RetardedSystem sys = RetardedSystem::companion((Vector(2) << 1.0, 1.0).finished());
    SystemInitialState st{(Vector(2) << 0.8, -0.3).finished(),
                          {make_grid_function(-1.0, 0.0, grid.per_unit,
                                              [](double t) { return 0.5 + t; }),
                           make_grid_function(-1.0, 0.0, grid.per_unit,
                                              [](double t) { return 1.0 - t * t; })}};
    const auto kkt = kkt_solve(qp_from_system(sys, st, 0.25, grid));
    const auto vol = volterra_route_system(sys, st, 0.25, grid);
    CHECK((kkt - vol).norm_l2() / vol.norm_l2() <= 1e-3);
  }
}

TEST_CASE("kkt rejects dependent constraints") {
  QuadraticProgram qp;
  const GridSpec grid{100};
  const long m = grid.index_of(0.5);
  qp.t0 = 0.0;
  qp.t1 = 0.5;
  qp.weights = trapezoid_weights(m + 1, grid.h());
  qp.constraint_rows.resize(2, m + 1);
  qp.constraint_rows.row(0) = qp.weights.transpose();
  qp.constraint_rows.row(1) = 2.0 * qp.weights.transpose();  // dependent, inconsistent
  qp.constraint_rhs = (Vector(2) << 1.0, 0.0).finished();
  CHECK_THROWS_AS(kkt_solve(qp), SolverError);
}
