#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "delayctrl/optimal.hpp"
#include "delayctrl/oracle.hpp"
#include "delayctrl/random_problems.hpp"

using namespace delayctrl;

namespace {
InitialState const_state(const GridSpec& grid, double y, double x0_value) {
  return make_state(grid, y, [=](double) { return x0_value; });
}

double rel_l2(const RealGridFunction& a, const RealGridFunction& b) {
  return (a - b).norm_l2() / std::max(1e-300, b.norm_l2());
}
}  // namespace

TEST_CASE("worked example: a1=1, y=1, x0=0, eps=1/2") {
  const GridSpec grid{1000};
  const InitialState st = const_state(grid, 1.0, 0.0);
  const OptimalSolution sol = optimal_simplest(1.0, st, 0.5, grid);

  const double coth_half = std::cosh(0.5) / std::sinh(0.5);
  CHECK(sol.constants[0] == doctest::Approx(-coth_half).epsilon(1e-6));
  CHECK(sol.constants[0] == doctest::Approx(-2.16395).epsilon(1e-4));

  double worst = 0.0;
  for (Eigen::Index i = 0; i < sol.generator.size(); ++i) {
    const double t = sol.generator.node(i);
    worst = std::max(worst,
                     std::abs(sol.generator[i] - (std::sinh(t) - coth_half * std::cosh(t))));
  }
  CHECK(worst <= 1e-6);

  // moment: int u0 = -1
  CHECK(sol.generator.integrate() == doctest::Approx(-1.0).epsilon(1e-10));

  // KKT oracle within 1e-3 relative L2
  const auto kkt = kkt_solve(qp_from_equation(DelayEquation::simplest(1.0), st, 0.5, grid));
  CHECK(rel_l2(kkt, sol.generator) <= 1e-3);
}

TEST_CASE("zero state gives the zero solution everywhere") {
  const GridSpec grid{1000};
  const InitialState z = const_state(grid, 0.0, 0.0);
  const auto sol = optimal_simplest(1.0, z, 0.5, grid);
  CHECK(sol.generator.max_abs() <= 1e-14);
  CHECK(sol.energy <= 1e-28);

  Vector r(2), a(2), d(1);
  r << 0.0, 1.0;
  a << 0.1, 0.9;
  d << 0.3;
  const std::function<double(double)> zf = [](double) { return 0.0; };
  const InitialState zn = make_state(grid, 0.0, zf, &zf);
  const auto soln = optimal_neutral(DelayEquation(r, a, d), zn, 0.25, grid);
  CHECK(soln.generator.max_abs() <= 1e-14);
  CHECK(soln.energy <= 1e-28);
}

TEST_CASE("a1 -> 0 limit: constant generator -y/eps") {
  const GridSpec grid{1000};
  const InitialState st = const_state(grid, 2.0, 0.3);
  const auto sol = optimal_simplest(1e-9, st, 0.5, grid);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < sol.generator.size(); ++i)
    worst = std::max(worst, std::abs(sol.generator[i] - (-2.0 / 0.5)));
  CHECK(worst <= 1e-7);
}

TEST_CASE("neutral with d = 0 degenerates to the simplest closed form") {
  const GridSpec grid{1000};
  const InitialState st = make_state(
      grid, 0.4, [](double t) { return 0.4 + 0.3 * t; },
      nullptr);
  const auto simplest = optimal_simplest(1.3, st, 0.25, grid);

  Vector r(2), a(2), d(1);
  r << 0.0, 1.0;
  a << 0.0, 1.3;
  d << 0.0;
  // d identically zero: equation must declare a nonzero a_N instead
  const DelayEquation eq(r, a, Vector());
  const auto neutral_path = optimal_neutral(eq, st, 0.25, grid);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < simplest.generator.size(); ++i)
    worst = std::max(worst, std::abs(simplest.generator[i] - neutral_path.generator[i]));
  CHECK(worst <= 1e-10);
}

TEST_CASE("retarded corollary equals the neutral theorem at d = 0") {
  Vector r(3), a(3);
  r << 0.0, 0.5, 1.0;
  a << 0.4, -1.1, 0.8;
  const DelayEquation eq(r, a, Vector());
  const GridSpec grid = GridSpec::for_equation(eq, 0.25, 1e-3);
  const Polynomial p{(Vector(4) << 0.6, -0.2, 0.1, 0.5).finished()};
  const InitialState st = make_poly_state(grid, -0.7, p, false);

  const auto ret = optimal_retarded(eq, st, 0.25, grid);
  const auto neu = optimal_neutral(eq, st, 0.25, grid);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < ret.generator.size(); ++i)
    worst = std::max(worst, std::abs(ret.generator[i] - neu.generator[i]));
  CHECK(worst <= 1e-12);
  CHECK(std::abs(ret.energy - neu.energy) <= 1e-12 * (1.0 + ret.energy));

  CHECK_THROWS_AS(optimal_retarded(DelayEquation((Vector(2) << 0.0, 1.0).finished(),
                                                 (Vector(2) << 0.0, 1.0).finished(),
                                                 (Vector(1) << 0.4).finished()),
                                   st, 0.25, grid),
                  ConfigError);
}

TEST_CASE("neutral worked case: moments, null residual, kkt distance") {
  Vector r(2), a(2), d(1);
  r << 0.0, 1.0;
  a << 0.0, 1.0;
  d << 0.5;
  const DelayEquation eq(r, a, d);
  const GridSpec grid{1000};
  const Polynomial p{(Vector(2) << 1.0, 1.0).finished()};  // x0 = 1 + t, y = 1
  const InitialState st = make_poly_state(grid, p(0.0), p, true);
  const double eps = 0.3;

  const auto sol = optimal_neutral(eq, st, eps, grid);
  const auto mc = moment_constraints(eq, st, eps, grid);
  CHECK(mc.residual(sol.generator).cwiseAbs().maxCoeff() <= 1e-8);

  const auto traj = simulate(eq, st, sol.control, 1.0 + eps, grid);
  CHECK(null_residual(traj, 1.0 + eps) <= 1e-4);

  const auto kkt = kkt_solve(qp_from_equation(eq, st, eps, grid));
  CHECK(rel_l2(kkt, sol.generator) <= 1e-3);
}

TEST_CASE("retarded two-delay case agrees with the KKT oracle") {
  Vector r(3), a(3);
  r << 0.0, 0.5, 1.0;
  a << 0.0, 1.0, 1.0;
  const DelayEquation eq(r, a, Vector());
  const GridSpec grid = GridSpec::for_equation(eq, 0.25, 2.5e-4);
  const InitialState st = const_state(grid, 1.0, 0.0);
  const auto sol = optimal_retarded(eq, st, 0.25, grid);
  const auto kkt = kkt_solve(qp_from_equation(eq, st, 0.25, grid));
  CHECK(rel_l2(kkt, sol.generator) <= 1e-3);
}

TEST_CASE("system n=1 equals the scalar problem with a1 = -g1") {
  const GridSpec grid{20000};  // fine grid so both closed-form routes agree tightly
  const double eps = 0.25;
  const RetardedSystem sys = RetardedSystem::companion((Vector(1) << -1.0).finished());
  SystemInitialState sst{(Vector(1) << 1.0).finished(),
                         {RealGridFunction::zero(-1.0, 0.0, grid.per_unit)}};
  const auto ssol = optimal_system(sys, sst, eps, grid);

  const InitialState st = const_state(grid, 1.0, 0.0);
  const auto scalar = optimal_simplest(1.0, st, eps, grid);
  CHECK(rel_l2(ssol.generator, scalar.generator) <= 1e-8);
  CHECK(std::abs(ssol.energy - scalar.energy) <= 1e-8 * (1.0 + scalar.energy));
}

TEST_CASE("system n=2 with g=(1,1): moments, null, oracle") {
  const GridSpec grid{1000};
  const RetardedSystem sys = RetardedSystem::companion((Vector(2) << 1.0, 1.0).finished());
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SystemInitialState st{(Vector(2) << u(rng), u(rng)).finished(),
                        {make_grid_function(-1.0, 0.0, grid.per_unit,
                                            [&](double t) { return 0.7 - 0.4 * t; }),
                         make_grid_function(-1.0, 0.0, grid.per_unit,
                                            [&](double t) { return -0.2 + t * t; })}};
  const double eps = 0.25;
  const auto sol = optimal_system(sys, st, eps, grid);

  const auto mc = system_moment_constraints(sys, st, eps, grid);
  CHECK(mc.residual(sol.generator).cwiseAbs().maxCoeff() <= 1e-8);

  const auto traj =
      simulate_system(sys, st, sol.control, 2.0 + eps, grid);
  CHECK(null_residual(traj, 2.0 + eps) <= 1e-4);

  const auto kkt = kkt_solve(qp_from_system(sys, st, eps, grid));
  CHECK(rel_l2(kkt, sol.generator) <= 1e-3);

  // zero state
  SystemInitialState z{Vector::Zero(2), {RealGridFunction::zero(-1.0, 0.0, grid.per_unit),
                                         RealGridFunction::zero(-1.0, 0.0, grid.per_unit)}};
  const auto zsol = optimal_system(sys, z, eps, grid);
  CHECK(zsol.generator.max_abs() <= 1e-12);
  CHECK(zsol.constants.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("optimality among admissible controls") {
  const GridSpec grid{500};
  const DelayEquation eq = DelayEquation::simplest(1.0);
  const InitialState st = const_state(grid, 1.0, 0.0);
  const double eps = 0.5;
  const auto sol = optimal_simplest(1.0, st, eps, grid);
  const auto mc = moment_constraints(eq, st, eps, grid);

  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Vector noise(sol.generator.size());
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = gauss(rng);
    const auto cand = project_onto_constraints(
        RealGridFunction(0.0, eps, sol.generator.data() + noise), mc);
    const double energy = assemble_control(eq, st, cand, grid).energy();
    const double dist = (cand - sol.generator).norm_l2();
    CHECK(energy >= sol.energy - 1e-12);
    if (dist >= 1e-4) CHECK(energy > sol.energy);
  }
}

TEST_CASE("integral-equation residual of the closed form") {
  // u0 - a1^2 (t*u0) - a1^2 int_0^t xfree must be constant (= c)
  const GridSpec grid{1000};
  const InitialState st = const_state(grid, 1.0, 0.0);
  const double eps = 0.5;
  const auto sol = optimal_simplest(1.0, st, eps, grid);
  const DelayEquation eq = DelayEquation::simplest(1.0);
  const auto xfree = free_trajectory(eq, st, eps, grid);

  const long m = grid.index_of(eps);
  Vector tk(m + 1);
  for (long i = 0; i <= m; ++i) tk[i] = grid.h() * static_cast<double>(i);
  const auto conv = convolve_kernel<double>(tk, sol.generator);
  const auto integral = xfree.cumulative();
  Vector resid(m + 1);
  for (long i = 0; i <= m; ++i)
    resid[i] = sol.generator[i] - conv[i] - integral[i];
  // subtract the projection onto the constant mode
  const double mean = resid.mean();
  double worst = 0.0;
  for (long i = 0; i <= m; ++i) worst = std::max(worst, std::abs(resid[i] - mean));
  CHECK(worst <= 1e-6 * sol.generator.max_abs());
  CHECK(mean == doctest::Approx(sol.constants[0]).epsilon(1e-6));
}

TEST_CASE("neutral integral-equation residual lies in the exponential mode") {
  Vector r(2), a(2), d(1);
  r << 0.0, 1.0;
  a << 0.4, 1.0;
  d << 0.5;
  const DelayEquation eq(r, a, d);
  const GridSpec grid{1000};
  const Polynomial p{(Vector(2) << 0.8, -0.5).finished()};
  const InitialState st = make_poly_state(grid, p(0.0), p, true);
  const double eps = 0.3;
  const auto sol = optimal_neutral(eq, st, eps, grid);

  const auto vp = volterra_problem_neutral(eq, st, eps, grid);
  const auto conv = convolve(vp.kernel, sol.generator);
  const long m = grid.index_of(eps);
  Vector resid(m + 1), mode(m + 1);
  for (long i = 0; i <= m; ++i) {
    resid[i] = sol.generator[i] - conv[i] - vp.rhs[i];
    mode[i] = vp.mode[i];
  }
  const double scale = mode.squaredNorm();
  const double coeff = resid.dot(mode) / scale;
  double worst = 0.0;
  for (long i = 0; i <= m; ++i) worst = std::max(worst, std::abs(resid[i] - coeff * mode[i]));
  CHECK(worst <= 1e-6 * sol.generator.max_abs());
}

TEST_CASE("generator scales linearly with the state") {
  const GridSpec grid{1000};
  Vector r(2), a(2), d(1);
  r << 0.0, 1.0;
  a << 0.3, -0.9;
  d << 0.4;
  const DelayEquation eq(r, a, d);
  const Polynomial p{(Vector(3) << 0.5, 0.2, -0.4).finished()};
  const InitialState st = make_poly_state(grid, p(0.0), p, true);
  const Polynomial p3{(Vector(3) << 1.5, 0.6, -1.2).finished()};
  const InitialState st3 = make_poly_state(grid, p3(0.0), p3, true);

  const auto one = optimal_neutral(eq, st, 0.25, grid);
  const auto three = optimal_neutral(eq, st3, 0.25, grid);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < one.generator.size(); ++i)
    worst = std::max(worst, std::abs(3.0 * one.generator[i] - three.generator[i]));
  CHECK(worst <= 1e-10 * std::max(1.0, three.generator.max_abs()));
}

TEST_CASE("closed form and kkt converge to each other under refinement") {
  const InitialState coarse_state = const_state(GridSpec{500}, 1.0, 0.0);
  auto dist = [&](long per_unit) {
    const GridSpec grid{per_unit};
    const InitialState st = const_state(grid, 1.0, 0.0);
    const auto sol = optimal_simplest(1.0, st, 0.5, grid);
    const auto kkt = kkt_solve(qp_from_equation(DelayEquation::simplest(1.0), st, 0.5, grid));
    return rel_l2(kkt, sol.generator);
  };
  const double d1 = dist(250), d2 = dist(500), d4 = dist(1000);
  CHECK(d2 <= d1);
  CHECK(d4 <= d2);
  CHECK(std::log2(d1 / d4) / 2.0 >= 1.0);  // order >= 1 in h
}

TEST_CASE("energy curve decreases in epsilon and satisfies the growth shape") {
  const GridSpec grid{1000};
  const DelayEquation eq = DelayEquation::simplest(1.0);
  const InitialState st = const_state(grid, 1.0, 0.0);
  const std::vector<double> eps_list{0.5, 0.4, 0.3, 0.2, 0.1};
  const auto curve = energy_curve(eq, st, eps_list, 1e-3);

  for (std::size_t i = 0; i + 1 < curve.size(); ++i)
    CHECK(curve[i + 1].second - curve[i].second > 1e-10);

  const double ref = curve[0].second * std::sqrt(curve[0].first);
  for (const auto& [eps, energy] : curve) CHECK(energy * std::sqrt(eps) <= 10.0 * ref);

  // zero state: all energies vanish
  const auto zcurve = energy_curve(eq, const_state(grid, 0.0, 0.0), eps_list, 1e-3);
  for (const auto& [eps, energy] : zcurve) CHECK(energy <= 1e-28);
}

TEST_CASE("random problems: closed form vs oracle across classes") {
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 4; ++rep) {
    const auto prob = random_scalar_problem(rng, rep % 2 == 1);
    const GridSpec grid = GridSpec::for_equation(prob.eq, prob.eps, 1e-3);
    const InitialState st = prob.state(grid);
    const auto sol = prob.eq.is_retarded() ? optimal_retarded(prob.eq, st, prob.eps, grid)
                                           : optimal_neutral(prob.eq, st, prob.eps, grid);
    const auto kkt = kkt_solve(qp_from_equation(prob.eq, st, prob.eps, grid));
    CHECK(rel_l2(kkt, sol.generator) <= 1e-3);
    const auto traj = simulate(prob.eq, st, sol.control, 1.0 + prob.eps, grid);
    CHECK(null_residual(traj, 1.0 + prob.eps) <= 1e-4);
  }
  for (int dim = 1; dim <= 3; ++dim) {
    const auto prob = random_system_problem(rng, dim);
    const GridSpec grid = GridSpec::for_system(prob.eps, 1e-3);
    const SystemInitialState st = prob.state(grid);
    const auto sol = optimal_system(prob.sys, st, prob.eps, grid);
    const auto kkt = kkt_solve(qp_from_system(prob.sys, st, prob.eps, grid));
    CHECK(rel_l2(kkt, sol.generator) <= 1e-3);
  }
}
