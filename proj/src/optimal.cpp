#include "delayctrl/optimal.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace delayctrl {

namespace {

/// One least-squares pass on the quadrature moment constraint: the solution
/// is affine in c, so a single linear correction lands the residual at
/// rounding level.
double refine_constant(double c, const RealGridFunction& base, const RealGridFunction& mode,
                       const MomentConstraints& mc) {
  const double r = l2_inner(mc.kernels[0], base) + c * l2_inner(mc.kernels[0], mode) - mc.rhs[0];
  if (std::abs(r) <= 1e-10) return c;
  const double slope = l2_inner(mc.kernels[0], mode);
  if (std::abs(slope) < 1e-14) throw SolverError("optimal: moment insensitive to the constant");
  return c - r / slope;
}

OptimalSolution package_scalar(const DelayEquation& eq, const InitialState& state,
                               const RealGridFunction& base, const RealGridFunction& mode,
                               double c_formula, const MomentConstraints& mc,
                               const GridSpec& grid) {
  const double c = refine_constant(c_formula, base, mode, mc);
  const RealGridFunction u0 = base + mode * c;
  ControlSignal control = assemble_control(eq, state, u0, grid);
  const double energy = control.energy();
  Vector constants(1);
  constants[0] = c;
  return OptimalSolution{u0, std::move(constants), std::move(control), energy};
}

}  // namespace

OptimalSolution optimal_simplest(double a1, const InitialState& state, double eps,
                                 const GridSpec& grid) {
  const DelayEquation eq = DelayEquation::simplest(a1);
  validate_state(eq, state);
  if (std::abs(a1) * eps > 50.0) throw SolverError("optimal_simplest: |a1| eps out of desk scale");
  const long m = grid.index_of(eps);
  const double h = grid.h();
  const RealGridFunction xfree = free_trajectory(eq, state, eps, grid);

  Vector ch(m + 1), sc(m + 1);
  for (long i = 0; i <= m; ++i) {
    const double t = h * static_cast<double>(i);
    ch[i] = std::cosh(a1 * t);
    sc[i] = sinhc(a1, t);
  }
  const RealGridFunction base = convolve_kernel<double>(ch, xfree) * (a1 * a1);
  const RealGridFunction mode(0.0, eps, ch);

  // c = -(x(eps) + a1^2 int sinhc(a1, eps-tau) x(tau) dtau) / sinhc(a1, eps)
  Vector rev(m + 1);
  for (long i = 0; i <= m; ++i) rev[i] = sinhc(a1, eps - h * static_cast<double>(i));
  const double num =
      xfree[m] + a1 * a1 * l2_inner(RealGridFunction(0.0, eps, std::move(rev)), xfree);
  const double c_formula = -num / sinhc(a1, eps);

  const MomentConstraints mc = moment_constraints(eq, state, eps, grid);
  return package_scalar(eq, state, base, mode, c_formula, mc, grid);
}

OptimalSolution optimal_neutral(const DelayEquation& eq, const InitialState& state, double eps,
                                const GridSpec& grid) {
  validate_state(eq, state);
  const Eigen::Index big_n = eq.n_delays();
  const double a0 = eq.a0();
  double dsq = 1.0, asum = a0 * a0;
  for (Eigen::Index k = 1; k <= big_n; ++k) {
    dsq += eq.d()[k] * eq.d()[k];
    asum += eq.a()[k] * eq.a()[k];
  }
  const double ahat = std::sqrt(asum / dsq);
  if (ahat * eps > 50.0) throw SolverError("optimal_neutral: a-hat eps out of desk scale");

  const long m = grid.index_of(eps);
  const double h = grid.h();
  Vector ch(m + 1), sc(m + 1);
  for (long i = 0; i <= m; ++i) {
    const double t = h * static_cast<double>(i);
    ch[i] = std::cosh(ahat * t);
    sc[i] = sinhc(ahat, t);
  }

  const FeedbackTail tail = feedback_tail(eq, state, eps, grid);
  const RealGridFunction xfree = free_trajectory(eq, state, eps, grid);

  Vector base = Vector::Zero(m + 1);
  for (Eigen::Index s = 1; s <= big_n; ++s) {
    const double ds = eq.d()[s], as = eq.a()[s];
    Vector kernel(m + 1);
    // (d_s a0 - a_s) ch + (a_s a0/ahat - d_s ahat) sh, sh written via sinhc
    for (long i = 0; i <= m; ++i)
      kernel[i] = (ds * a0 - as) * ch[i] + (as * a0 - ds * ahat * ahat) * sc[i];
    const RealGridFunction conv = convolve_kernel<double>(kernel, tail.phi[s - 1]);
    base += conv.data() - ds * tail.phi[s - 1].data();
  }
  base /= dsq;

  Vector mode_v(m + 1);
  for (long i = 0; i <= m; ++i) mode_v[i] = (ch[i] - a0 * sc[i]) / dsq;

  // c = (-d^2 x(eps) + int sum_s (d_s ch(ahat(eps-tau)) + a_s sinhc) phi_s) / sinhc(ahat, eps)
  double num = -dsq * xfree[m];
  for (Eigen::Index s = 1; s <= big_n; ++s) {
    Vector rk(m + 1);
    for (long i = 0; i <= m; ++i) {
      const double dt = eps - h * static_cast<double>(i);
      rk[i] = eq.d()[s] * std::cosh(ahat * dt) + eq.a()[s] * sinhc(ahat, dt);
    }
    num += l2_inner(RealGridFunction(0.0, eps, std::move(rk)), tail.phi[s - 1]);
  }
  const double c_formula = num / sinhc(ahat, eps);

  const MomentConstraints mc = moment_constraints(eq, state, eps, grid);
  return package_scalar(eq, state, RealGridFunction(0.0, eps, std::move(base)),
                        RealGridFunction(0.0, eps, std::move(mode_v)), c_formula, mc, grid);
}

OptimalSolution optimal_retarded(const DelayEquation& eq, const InitialState& state, double eps,
                                 const GridSpec& grid) {
  if (!eq.is_retarded()) throw ConfigError("optimal_retarded: equation is not retarded");
  const Eigen::Index big_n = eq.n_delays();
  const double a0 = eq.a0();
  double asum = a0 * a0;
  for (Eigen::Index k = 1; k <= big_n; ++k) asum += eq.a()[k] * eq.a()[k];
  const double ahat = std::sqrt(asum);
  if (ahat * eps > 50.0) throw SolverError("optimal_retarded: a-hat eps out of desk scale");

  const long m = grid.index_of(eps);
  const double h = grid.h();
  Vector ch(m + 1), sc(m + 1);
  for (long i = 0; i <= m; ++i) {
    const double t = h * static_cast<double>(i);
    ch[i] = std::cosh(ahat * t);
    sc[i] = sinhc(ahat, t);
  }

  const FeedbackTail tail = feedback_tail(eq, state, eps, grid);
  const RealGridFunction xfree = free_trajectory(eq, state, eps, grid);

  Vector base = Vector::Zero(m + 1);
  for (Eigen::Index s = 1; s <= big_n; ++s) {
    const double as = eq.a()[s];
    Vector kernel(m + 1);
    // a_s [ (a0/ahat) sh(ahat(t-tau)) - ch(ahat(t-tau)) ]
    for (long i = 0; i <= m; ++i) kernel[i] = as * (a0 * sc[i] - ch[i]);
    base += convolve_kernel<double>(kernel, tail.phi[s - 1]).data();
  }

  Vector mode_v(m + 1);
  for (long i = 0; i <= m; ++i) mode_v[i] = ch[i] - a0 * sc[i];

  double num = -xfree[m];
  for (Eigen::Index s = 1; s <= big_n; ++s) {
    Vector rk(m + 1);
    for (long i = 0; i <= m; ++i) rk[i] = eq.a()[s] * sinhc(ahat, eps - h * static_cast<double>(i));
    num += l2_inner(RealGridFunction(0.0, eps, std::move(rk)), tail.phi[s - 1]);
  }
  const double c_formula = num / sinhc(ahat, eps);

  const MomentConstraints mc = moment_constraints(eq, state, eps, grid);
  return package_scalar(eq, state, RealGridFunction(0.0, eps, std::move(base)),
                        RealGridFunction(0.0, eps, std::move(mode_v)), c_formula, mc, grid);
}

namespace {

/// Roots of the monic real polynomial c[0] + c[1] s + ... + s^{size(c)}
/// (low-order coefficients given) via the companion matrix.
ComplexVector poly_roots(const Vector& monic_coeffs) {
  const Eigen::Index deg = monic_coeffs.size();
  Matrix comp = Matrix::Zero(deg, deg);
  for (Eigen::Index i = 1; i < deg; ++i) comp(i, i - 1) = 1.0;
  for (Eigen::Index i = 0; i < deg; ++i) comp(i, deg - 1) = -monic_coeffs[i];
  Eigen::EigenSolver<Matrix> es(comp);
  if (es.info() != Eigen::Success) throw SolverError("poly_roots: eigensolver failed");
  return es.eigenvalues();
}

Complex poly_eval(const Vector& coeffs, Complex s) {
  Complex v = 0.0;
  for (Eigen::Index j = coeffs.size() - 1; j >= 0; --j) v = v * s + coeffs[j];
  return v;
}

}  // namespace

OptimalSolution optimal_system(const RetardedSystem& sys, const SystemInitialState& state,
                               double eps, const GridSpec& grid) {
  const Eigen::Index n = sys.dim();
  const Vector& g = sys.companion_g();
  const long m = grid.index_of(eps);
  const double h = grid.h();

  // P(s) = s^{2n} + sum (-1)^k g_k^2 s^{2(n-k)}; kappa = delta + sum rho_j e^{lambda_j t}
  Vector pcoef = Vector::Zero(2 * n + 1);
  pcoef[2 * n] = 1.0;
  for (Eigen::Index k = 1; k <= n; ++k)
    pcoef[2 * (n - k)] += ((k % 2 == 0) ? 1.0 : -1.0) * g[k - 1] * g[k - 1];

  ComplexVector lambdas;
  ComplexVector rhos;
  const bool trivial_kernel = g.isZero(0.0);
  if (!trivial_kernel) {
    lambdas = poly_roots(pcoef.head(2 * n) / pcoef[2 * n]);
    for (Eigen::Index i = 0; i < lambdas.size(); ++i) {
      if (std::abs(lambdas[i]) * eps > 50.0)
        throw SolverError("optimal_system: kernel root out of desk scale");
      for (Eigen::Index j = i + 1; j < lambdas.size(); ++j)
        if (std::abs(lambdas[i] - lambdas[j]) < 1e-6)
          throw MultipleRootUnsupported("optimal_system: clustered roots of the symbol");
    }
    Vector pderiv(2 * n);
    for (Eigen::Index j = 1; j <= 2 * n; ++j) pderiv[j - 1] = static_cast<double>(j) * pcoef[j];
    rhos.resize(lambdas.size());
    for (Eigen::Index j = 0; j < lambdas.size(); ++j) {
      const Complex num = std::pow(lambdas[j], static_cast<double>(2 * n));
      rhos[j] = num / poly_eval(pderiv, lambdas[j]);
    }
  }

  auto apply_kappa = [&](const RealGridFunction& f) {
    if (trivial_kernel) return f;
    ComplexVector acc = f.data().cast<Complex>();
    ComplexGridFunction fc(0.0, eps, f.data().cast<Complex>());
    for (Eigen::Index j = 0; j < lambdas.size(); ++j) {
      ComplexVector kern(m + 1);
      for (long i = 0; i <= m; ++i) kern[i] = std::exp(lambdas[j] * (h * static_cast<double>(i)));
      acc += rhos[j] * convolve_kernel<Complex>(kern, fc).data();
    }
    const double imag_max = acc.imag().cwiseAbs().maxCoeff();
    const double real_max = std::max(1.0, acc.real().cwiseAbs().maxCoeff());
    if (imag_max > 1e-9 * real_max)
      throw SolverError("optimal_system: kernel lost realness");
    return RealGridFunction(0.0, eps, acc.real());
  };

  const FeedbackTail tail = system_feedback_tail(sys, state, eps, grid);
  Vector rhs_base = Vector::Zero(m + 1);
  double factorial = 1.0;
  for (Eigen::Index k = 1; k <= n; ++k) {
    Vector pk(m + 1);
    for (long i = 0; i <= m; ++i)
      pk[i] = std::pow(h * static_cast<double>(i), static_cast<double>(k - 1));
    const double s = (k % 2 == 0) ? -1.0 : 1.0;  // (-1)^{k+1}
    rhs_base += (s * g[k - 1] / factorial) *
                convolve_kernel<double>(pk, tail.phi[k - 1]).data();
    factorial *= static_cast<double>(k);
  }
  const RealGridFunction base = apply_kappa(RealGridFunction(0.0, eps, std::move(rhs_base)));

  std::vector<RealGridFunction> modes;
  for (Eigen::Index k = 1; k <= n; ++k) {
    Vector pw(m + 1);
    for (long i = 0; i <= m; ++i)
      pw[i] = std::pow(eps - h * static_cast<double>(i), static_cast<double>(k - 1));
    modes.push_back(apply_kappa(RealGridFunction(0.0, eps, std::move(pw))));
  }

  const MomentConstraints mc = system_moment_constraints(sys, state, eps, grid);
  Matrix a(n, n);
  Vector b(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    b[j] = mc.rhs[j] - l2_inner(mc.kernels[j], base);
    for (Eigen::Index k = 0; k < n; ++k) a(j, k) = l2_inner(mc.kernels[j], modes[k]);
  }
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible())
    throw DegenerateMomentSystem("optimal_system: singular moment system for q");
  const Vector q = lu.solve(b);

  Vector u = base.data();
  for (Eigen::Index k = 0; k < n; ++k) u += q[k] * modes[k].data();
  RealGridFunction u0(0.0, eps, std::move(u));

  ControlSignal control = assemble_system_control(sys, state, u0, grid);
  const double energy = control.energy();
  return OptimalSolution{std::move(u0), q, std::move(control), energy};
}

namespace {

OptimalSolution dispatch_scalar(const DelayEquation& eq, const InitialState& state, double eps,
                                const GridSpec& grid) {
  if (eq.is_simplest()) return optimal_simplest(eq.a()[1], state, eps, grid);
  if (eq.is_retarded()) return optimal_retarded(eq, state, eps, grid);
  return optimal_neutral(eq, state, eps, grid);
}

}  // namespace

std::vector<std::pair<double, double>> energy_curve(const DelayEquation& eq,
                                                    const InitialState& state,
                                                    const std::vector<double>& eps_list,
                                                    double target_h) {
  std::vector<std::pair<double, double>> out;
  for (double eps : eps_list) {
    const GridSpec grid = GridSpec::for_equation(eq, eps, target_h);
    if (state.x0.intervals() != grid.per_unit)
      throw GridError("energy_curve: state sampled on a different lattice");
    out.emplace_back(eps, dispatch_scalar(eq, state, eps, grid).energy);
  }
  return out;
}

std::vector<std::pair<double, double>> energy_curve(const RetardedSystem& sys,
                                                    const SystemInitialState& state,
                                                    const std::vector<double>& eps_list,
                                                    double target_h) {
  std::vector<std::pair<double, double>> out;
  for (double eps : eps_list) {
    const GridSpec grid = GridSpec::for_system(eps, target_h);
    if (state.x0.front().intervals() != grid.per_unit)
      throw GridError("energy_curve: state sampled on a different lattice");
    out.emplace_back(eps, optimal_system(sys, state, eps, grid).energy);
  }
  return out;
}

}  // namespace delayctrl
