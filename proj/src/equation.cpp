#include "delayctrl/equation.hpp"

#include <Eigen/SVD>
#include <numeric>

namespace delayctrl {

DelayEquation::DelayEquation(Vector delays, Vector a_coeffs, Vector d_coeffs)
    : delays_(std::move(delays)), a_(std::move(a_coeffs)) {
  const Eigen::Index n = delays_.size();
  if (n < 2) throw ConfigError("DelayEquation: need at least delays r_0 = 0 and r_N = 1");
  if (std::abs(delays_[0]) > 1e-12) throw ConfigError("DelayEquation: r_0 must be 0");
  if (std::abs(delays_[n - 1] - 1.0) > 1e-12) throw ConfigError("DelayEquation: r_N must be 1");
  for (Eigen::Index k = 1; k < n; ++k)
    if (!(delays_[k] > delays_[k - 1]))
      throw ConfigError("DelayEquation: delays must be strictly increasing");
  delays_[0] = 0.0;
  delays_[n - 1] = 1.0;
  if (a_.size() != n) throw ConfigError("DelayEquation: a_coeffs must have N+1 entries");

  // d_coeffs comes as d_1..d_N (possibly empty for retarded equations);
  // store aligned with delays, d[0] = 0.
  d_ = Vector::Zero(n);
  if (d_coeffs.size() == n - 1) {
    d_.tail(n - 1) = d_coeffs;
  } else if (d_coeffs.size() == n) {
    if (std::abs(d_coeffs[0]) > 0.0) throw ConfigError("DelayEquation: d_0 must be absent or 0");
    d_ = d_coeffs;
  } else if (d_coeffs.size() != 0) {
    throw ConfigError("DelayEquation: d_coeffs must have N entries (d_1..d_N) or be empty");
  }

  const double aN = a_[n - 1], dN = d_[n - 1];
  if (aN * aN + dN * dN == 0.0)
    throw ConfigError("DelayEquation: d_N^2 + a_N^2 must be nonzero");
}

DelayEquation DelayEquation::simplest(double a1) {
  Vector r(2), a(2);
  r << 0.0, 1.0;
  a << 0.0, a1;
  return DelayEquation(r, a, Vector());
}

Matrix RetardedSystem::controllability_matrix(const Matrix& A, const Vector& b) {
  const Eigen::Index n = A.rows();
  Matrix c(n, n);
  Vector col = b;
  for (Eigen::Index j = 0; j < n; ++j) {
    c.col(j) = col;
    col = A * col;
  }
  return c;
}

RetardedSystem::RetardedSystem(Matrix A, Vector b) : A_(std::move(A)), b_(std::move(b)) {
  const Eigen::Index n = A_.rows();
  if (A_.cols() != n || b_.size() != n || n < 1)
    throw ConfigError("RetardedSystem: A must be n x n and b an n-vector");
  const Matrix c = controllability_matrix(A_, b_);
  Eigen::JacobiSVD<Matrix> svd(c);
  const double smax = svd.singularValues()[0];
  if (smax <= 0.0 || svd.singularValues()[n - 1] < 1e-10 * smax)
    throw ConfigError("RetardedSystem: pair (A, b) is not controllable");

  // Detect the exact companion shape and cache g.
  bool comp = true;
  for (Eigen::Index i = 0; i < n && comp; ++i) {
    if (std::abs(b_[i] - (i == 0 ? 1.0 : 0.0)) > 0.0) comp = false;
  }
  for (Eigen::Index i = 1; i < n && comp; ++i)
    for (Eigen::Index j = 0; j < n && comp; ++j)
      if (A_(i, j) != (j == i - 1 ? 1.0 : 0.0)) comp = false;
  if (comp) companion_g_ = Vector(-A_.row(0).transpose());
}

RetardedSystem RetardedSystem::companion(const Vector& g) {
  const Eigen::Index n = g.size();
  Matrix A = Matrix::Zero(n, n);
  A.row(0) = -g.transpose();
  for (Eigen::Index i = 1; i < n; ++i) A(i, i - 1) = 1.0;
  Vector b = Vector::Zero(n);
  b[0] = 1.0;
  return RetardedSystem(std::move(A), std::move(b));
}

const InitialState& validate_state(const DelayEquation& eq, const InitialState& state) {
  if (std::abs(state.x0.t_start() + 1.0) > 1e-12 || std::abs(state.x0.t_end()) > 1e-12)
    throw ConfigError("InitialState: x0 must live on [-1, 0]");
  if (!eq.is_retarded()) {
    if (!state.x0_deriv)
      throw MissingDerivative("neutral state requires x0_deriv (M^2-hat membership)");
    if (!state.x0.same_grid(*state.x0_deriv))
      throw GridError("InitialState: x0 and x0_deriv grids differ");
    const double x00 = state.x0[state.x0.size() - 1];
    const double tol = 1e-8 * (1.0 + std::abs(state.y) + std::abs(x00));
    if (std::abs(state.y - x00) > tol)
      throw CompatibilityViolation("neutral state requires y = x0(0); got y=" +
                                   std::to_string(state.y) + ", x0(0)=" + std::to_string(x00));
  }
  return state;
}

namespace {
long lcm_capped(long a, long b, long cap) {
  const long g = std::gcd(a, b);
  const long q = a / g;
  if (b > cap / q) return cap + 1;
  return q * b;
}
}  // namespace

GridSpec GridSpec::build(const std::vector<double>& breakpoints, double epsilon, double target_h) {
  if (!(target_h > 0.0)) throw GridError("GridSpec: target_h must be positive");
  // qmax small enough that 1e-9-close rationals of irrationals are rejected
  constexpr long kQMax = 10000;
  long den = 1;
  auto absorb = [&](double v) {
    long p = 0, q = 1;
    if (!rationalize(v, kQMax, p, q))
      throw GridError("GridSpec: value " + std::to_string(v) + " is not grid-commensurate");
    den = lcm_capped(den, q, 1000000);
    if (den > 1000000)
      throw GridError("GridSpec: breakpoints require more than 1e6 nodes per unit");
  };
  for (double b : breakpoints) absorb(b);
  absorb(epsilon);

  const long base = static_cast<long>(std::ceil(1.0 / target_h - 1e-9));
  const long mult = std::max<long>(1, (base + den - 1) / den);
  GridSpec spec{den * mult};

  const double h = spec.h();
  if (epsilon < 2.0 * h - 1e-12)
    throw GridError("GridSpec: epsilon shorter than two grid steps");
  return spec;
}

GridSpec GridSpec::for_equation(const DelayEquation& eq, double epsilon, double target_h) {
  if (!(epsilon > 0.0) || !(epsilon < eq.delays()[1]))
    throw ConfigError("epsilon must satisfy 0 < epsilon < r_1");
  if (epsilon > eq.min_gap() + 1e-12)
    throw ConfigError("epsilon must not exceed the smallest delay gap");
  std::vector<double> pts;
  for (Eigen::Index k = 0; k < eq.delays().size(); ++k) pts.push_back(eq.delays()[k]);
  GridSpec spec = GridSpec::build(pts, epsilon, target_h);
  // psi segments have length gap - epsilon; require >= 2h unless empty.
  const double h = spec.h();
  for (Eigen::Index k = 1; k < eq.delays().size(); ++k) {
    const double gap = eq.delays()[k] - eq.delays()[k - 1] - epsilon;
    if (gap > 1e-12 && gap < 2.0 * h - 1e-12)
      throw GridError("GridSpec: delay gap minus epsilon shorter than two grid steps");
  }
  return spec;
}

GridSpec GridSpec::for_system(double epsilon, double target_h) {
  if (!(epsilon > 0.0) || !(epsilon < 1.0))
    throw ConfigError("epsilon must satisfy 0 < epsilon < 1");
  GridSpec spec = GridSpec::build({1.0}, epsilon, target_h);
  const double rest = 1.0 - epsilon;
  if (rest > 1e-12 && rest < 2.0 * spec.h() - 1e-12)
    throw GridError("GridSpec: 1 - epsilon shorter than two grid steps");
  return spec;
}

InitialState make_state(const GridSpec& grid, double y, const std::function<double(double)>& x0,
                        const std::function<double(double)>* x0_deriv) {
  InitialState s{y, RealGridFunction::from_fn(-1.0, 0.0, grid.per_unit, x0), std::nullopt};
  if (x0_deriv)
    s.x0_deriv = RealGridFunction::from_fn(-1.0, 0.0, grid.per_unit, *x0_deriv);
  return s;
}

InitialState make_poly_state(const GridSpec& grid, double y, const Polynomial& x0,
                             bool with_deriv) {
  if (!with_deriv) return make_state(grid, y, [&](double t) { return x0(t); });
  const Polynomial d = x0.derivative();
  const std::function<double(double)> df = [&](double t) { return d(t); };
  return make_state(grid, y, [&](double t) { return x0(t); }, &df);
}

}  // namespace delayctrl
