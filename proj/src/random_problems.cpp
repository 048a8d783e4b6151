#include "delayctrl/random_problems.hpp"

#include <Eigen/Eigenvalues>

namespace delayctrl {

InitialState RandomScalarProblem::state(const GridSpec& grid) const {
  return make_poly_state(grid, y, x0, !eq.is_retarded());
}

SystemInitialState RandomSystemProblem::state(const GridSpec& grid) const {
  SystemInitialState s{y, {}};
  for (const auto& p : x0)
    s.x0.push_back(RealGridFunction::from_fn(-1.0, 0.0, grid.per_unit,
                                             [&](double t) { return p(t); }));
  return s;
}

namespace {
double lattice(std::mt19937_64& rng, double lo, double hi) {
  // uniform on {lo, lo+0.05, ..., hi}
  const long n = std::lround((hi - lo) / 0.05);
  std::uniform_int_distribution<long> pick(0, n);
  return lo + 0.05 * static_cast<double>(pick(rng));
}

Polynomial random_poly(std::mt19937_64& rng, int degree) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Vector c(degree + 1);
  for (int j = 0; j <= degree; ++j) c[j] = unit(rng);
  return Polynomial{c};
}
}  // namespace

RandomScalarProblem random_scalar_problem(std::mt19937_64& rng, bool neutral) {
  std::uniform_int_distribution<int> pick_n(1, 3);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const int big_n = pick_n(rng);

  // delays on the 0.05 lattice with gaps >= 0.2
  Vector delays(big_n + 1);
  while (true) {
    delays[0] = 0.0;
    delays[big_n] = 1.0;
    bool ok = true;
    for (int k = 1; k < big_n; ++k) delays[k] = lattice(rng, 0.2, 0.8);
    for (int k = 1; k <= big_n; ++k)
      if (delays[k] - delays[k - 1] < 0.2 - 1e-9) ok = false;
    for (int k = 1; k < big_n; ++k)
      if (delays[k + 1] <= delays[k]) ok = false;
    if (ok) break;
  }
  double min_gap = 1.0;
  for (int k = 1; k <= big_n; ++k) min_gap = std::min(min_gap, delays[k] - delays[k - 1]);

  Vector a(big_n + 1), d;
  a[0] = unit(rng);
  for (int k = 1; k <= big_n; ++k) a[k] = 2.0 * unit(rng);
  if (neutral) {
    d.resize(big_n);
    double total = 0.0;
    for (int k = 0; k < big_n; ++k) {
      d[k] = 0.45 * unit(rng);
      total += std::abs(d[k]);
    }
    if (std::abs(d[big_n - 1]) < 0.15) d[big_n - 1] = (d[big_n - 1] < 0.0 ? -0.2 : 0.2);
    if (total > 0.9) d *= 0.9 / total;
  } else {
    if (std::abs(a[big_n]) < 0.3) a[big_n] = (a[big_n] < 0.0 ? -0.5 : 0.5);
  }

  const double eps = lattice(rng, 0.1, std::min(0.3, min_gap - 0.05));
  const Polynomial x0 = random_poly(rng, 3);
  DelayEquation eq(delays, a, d);
  const double y = neutral ? x0(0.0) : unit(rng);
  return RandomScalarProblem{std::move(eq), x0, y, eps};
}

RandomSystemProblem random_system_problem(std::mt19937_64& rng, int dim) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> mag(0.3, 1.8);

  Vector g(dim);
  while (true) {
    for (int k = 0; k < dim; ++k) g[k] = (unit(rng) < 0.0 ? -1.0 : 1.0) * mag(rng);
    // keep the symbol polynomial away from clustered roots
    Vector pcoef = Vector::Zero(2 * dim + 1);
    pcoef[2 * dim] = 1.0;
    for (int k = 1; k <= dim; ++k)
      pcoef[2 * (dim - k)] += ((k % 2 == 0) ? 1.0 : -1.0) * g[k - 1] * g[k - 1];
    Matrix comp = Matrix::Zero(2 * dim, 2 * dim);
    for (int i = 1; i < 2 * dim; ++i) comp(i, i - 1) = 1.0;
    for (int i = 0; i < 2 * dim; ++i) comp(i, 2 * dim - 1) = -pcoef[i];
    Eigen::EigenSolver<Matrix> es(comp);
    double gap = 1e9;
    for (int i = 0; i < 2 * dim; ++i)
      for (int j = i + 1; j < 2 * dim; ++j)
        gap = std::min(gap, std::abs(es.eigenvalues()[i] - es.eigenvalues()[j]));
    if (gap > 1e-2) break;
  }

  const double eps = lattice(rng, 0.1, 0.25);
  std::vector<Polynomial> x0;
  Vector y(dim);
  for (int j = 0; j < dim; ++j) {
    x0.push_back(random_poly(rng, 2));
    y[j] = unit(rng);
  }
  return RandomSystemProblem{RetardedSystem::companion(g), std::move(x0), std::move(y), eps};
}

}  // namespace delayctrl
