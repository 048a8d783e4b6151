#include "delayctrl/oracle.hpp"

#include <Eigen/LU>

namespace delayctrl {

namespace {

/// Lower-triangular running integral (V u)(t_i) = int_0^{t_i} K(t_i, tau) u dtau
/// with trapezoid weights; K passed as K(i, j) of the node pair.
Matrix running_operator(Eigen::Index nodes, double h,
                        const std::function<double(Eigen::Index, Eigen::Index)>& kernel) {
  Matrix v = Matrix::Zero(nodes, nodes);
  for (Eigen::Index i = 1; i < nodes; ++i) {
    v(i, 0) = 0.5 * h * kernel(i, 0);
    for (Eigen::Index j = 1; j < i; ++j) v(i, j) = h * kernel(i, j);
    v(i, i) = 0.5 * h * kernel(i, i);
  }
  return v;
}

}  // namespace

Matrix QuadraticProgram::hessian() const {
  const Eigen::Index n = dim();
  const Matrix w = weights.asDiagonal();
  double ident_total = 1.0;
  for (const auto& op : ops) ident_total += op.ident_coeff * op.ident_coeff;
  Matrix h = Matrix::Zero(n, n);
  h.diagonal() = ident_total * weights;

  for (std::size_t kid = 0; kid < kernels.size(); ++kid) {
    double cross = 0.0, square = 0.0;
    for (const auto& op : ops) {
      if (op.kernel_id != static_cast<int>(kid)) continue;
      cross += op.ident_coeff * op.kernel_coeff;
      square += op.kernel_coeff * op.kernel_coeff;
    }
    if (cross == 0.0 && square == 0.0) continue;
    const Matrix& v = kernels[kid];
    const Matrix wv = weights.asDiagonal() * v;
    if (cross != 0.0) h += cross * (wv + wv.transpose());
    if (square != 0.0) h += square * (v.transpose() * wv);
  }
  return h;
}

Vector QuadraticProgram::gradient() const {
  Vector g = Vector::Zero(dim());
  for (const auto& op : ops) {
    const Vector wphi = weights.cwiseProduct(op.offset);
    if (op.ident_coeff != 0.0) g += op.ident_coeff * wphi;
    if (op.kernel_coeff != 0.0) g += op.kernel_coeff * (kernels[op.kernel_id].transpose() * wphi);
  }
  return g;
}

double QuadraticProgram::objective(const Vector& u) const {
  double phi = u.cwiseProduct(weights).dot(u);
  for (const auto& op : ops) {
    Vector seg = op.offset + op.ident_coeff * u;
    if (op.kernel_coeff != 0.0) seg += op.kernel_coeff * (kernels[op.kernel_id] * u);
    phi += seg.cwiseProduct(weights).dot(seg);
  }
  return phi;
}

Vector QuadraticProgram::constraint_residual(const Vector& u) const {
  return constraint_rows * u - constraint_rhs;
}

QuadraticProgram qp_from_equation(const DelayEquation& eq, const InitialState& state, double eps,
                                  const GridSpec& grid) {
  const long m = grid.index_of(eps);
  const double h = grid.h();
  const double a0 = eq.a0();
  QuadraticProgram qp;
  qp.t0 = 0.0;
  qp.t1 = eps;
  qp.weights = trapezoid_weights(m + 1, h);
  qp.kernels.push_back(running_operator(
      m + 1, h, [&](Eigen::Index i, Eigen::Index j) {
        return std::exp(a0 * h * static_cast<double>(i - j));
      }));

  const FeedbackTail tail = feedback_tail(eq, state, eps, grid);
  for (Eigen::Index s = 1; s <= eq.n_delays(); ++s) {
    QuadraticProgram::AffineOp op;
    op.offset = tail.phi[s - 1].data();
    op.ident_coeff = eq.d()[s];
    op.kernel_coeff = eq.d()[s] * a0 - eq.a()[s];
    op.kernel_id = (op.kernel_coeff == 0.0) ? -1 : 0;
    qp.ops.push_back(std::move(op));
  }

  const MomentConstraints mc = moment_constraints(eq, state, eps, grid);
  qp.constraint_rows.resize(1, m + 1);
  for (Eigen::Index i = 0; i <= m; ++i)
    qp.constraint_rows(0, i) = qp.weights[i] * mc.kernels[0][i];
  qp.constraint_rhs = mc.rhs;
  return qp;
}

QuadraticProgram qp_from_system(const RetardedSystem& sys, const SystemInitialState& state,
                                double eps, const GridSpec& grid) {
  const Eigen::Index n = sys.dim();
  const Vector& g = sys.companion_g();
  const long m = grid.index_of(eps);
  const double h = grid.h();
  QuadraticProgram qp;
  qp.t0 = 0.0;
  qp.t1 = eps;
  qp.weights = trapezoid_weights(m + 1, h);

  const FeedbackTail tail = system_feedback_tail(sys, state, eps, grid);
  double factorial = 1.0;
  for (Eigen::Index k = 1; k <= n; ++k) {
    qp.kernels.push_back(running_operator(m + 1, h, [&](Eigen::Index i, Eigen::Index j) {
      return std::pow(h * static_cast<double>(i - j), static_cast<double>(k - 1));
    }));
    QuadraticProgram::AffineOp op;
    op.offset = tail.phi[k - 1].data();
    op.ident_coeff = 0.0;
    op.kernel_coeff = g[k - 1] / factorial;
    op.kernel_id = static_cast<int>(k - 1);
    qp.ops.push_back(std::move(op));
    factorial *= static_cast<double>(k);
  }

  const MomentConstraints mc = system_moment_constraints(sys, state, eps, grid);
  qp.constraint_rows.resize(n, m + 1);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i <= m; ++i)
      qp.constraint_rows(j, i) = qp.weights[i] * mc.kernels[j][i];
  qp.constraint_rhs = mc.rhs;
  return qp;
}

RealGridFunction kkt_solve(const QuadraticProgram& qp) {
  const Eigen::Index n = qp.dim();
  const Eigen::Index nc = qp.constraint_rhs.size();
  Matrix kkt = Matrix::Zero(n + nc, n + nc);
  kkt.topLeftCorner(n, n) = qp.hessian();
  kkt.topRightCorner(n, nc) = qp.constraint_rows.transpose();
  kkt.bottomLeftCorner(nc, n) = qp.constraint_rows;
  Vector rhs(n + nc);
  rhs.head(n) = -qp.gradient();
  rhs.tail(nc) = qp.constraint_rhs;

  Eigen::PartialPivLU<Matrix> lu(kkt);
  const Vector sol = lu.solve(rhs);
  const double rel = (kkt * sol - rhs).norm() / (1.0 + rhs.norm());
  if (!std::isfinite(rel) || rel > 1e-8)
    throw SolverError("kkt_solve: singular saddle system (dependent constraints?)");
  return RealGridFunction(qp.t0, qp.t1, sol.head(n));
}

RealGridFunction volterra_solve(const RealGridFunction& kernel, const RealGridFunction& rhs,
                                double c) {
  if (!kernel.same_grid(rhs)) throw GridError("volterra_solve: grid mismatch");
  const Eigen::Index n = kernel.size();
  const double h = kernel.step();
  const double diag = 1.0 - 0.5 * h * kernel[0];
  if (std::abs(diag) < 1e-12) throw SolverError("volterra_solve: degenerate diagonal");
  Vector u(n);
  u[0] = (rhs[0] + c) / diag;
  for (Eigen::Index i = 1; i < n; ++i) {
    double acc = rhs[i] + c + 0.5 * h * kernel[i] * u[0];
    for (Eigen::Index j = 1; j < i; ++j) acc += h * kernel[i - j] * u[j];
    u[i] = acc / diag;
  }
  return RealGridFunction(kernel.t_start(), kernel.t_end(), std::move(u));
}

std::pair<double, RealGridFunction> constant_search(
    const std::function<RealGridFunction(double)>& family, const MomentConstraints& constraints) {
  if (constraints.rhs.size() != 1)
    throw SolverError("constant_search: a single moment constraint is required");
  const RealGridFunction u0 = family(0.0);
  const RealGridFunction u1 = family(1.0);
  const double r0 = l2_inner(constraints.kernels[0], u0) - constraints.rhs[0];
  const double r1 = l2_inner(constraints.kernels[0], u1) - constraints.rhs[0];
  const double slope = r1 - r0;
  if (std::abs(slope) < 1e-14 * (1.0 + std::abs(r0))) {
    if (std::abs(r0) < 1e-12) return {0.0, u0};
    throw DegenerateMomentSystem("constant_search: constraint insensitive to c");
  }
  const double c = -r0 / slope;
  return {c, family(c)};
}

VolterraProblem volterra_problem_simplest(double a1, const InitialState& state, double eps,
                                          const GridSpec& grid) {
  const DelayEquation eq = DelayEquation::simplest(a1);
  const long m = grid.index_of(eps);
  const double h = grid.h();
  Vector kv(m + 1), mv(m + 1);
  for (long i = 0; i <= m; ++i) {
    kv[i] = a1 * a1 * h * static_cast<double>(i);
    mv[i] = 1.0;
  }
  const RealGridFunction xfree = free_trajectory(eq, state, eps, grid);
  RealGridFunction rhs = xfree.cumulative() * (a1 * a1);
  return VolterraProblem{RealGridFunction(0.0, eps, std::move(kv)), std::move(rhs),
                         RealGridFunction(0.0, eps, std::move(mv))};
}

VolterraProblem volterra_problem_neutral(const DelayEquation& eq, const InitialState& state,
                                         double eps, const GridSpec& grid) {
  const long m = grid.index_of(eps);
  const double h = grid.h();
  const double a0 = eq.a0();
  double dsq = 1.0, s_coeff = 0.0;
  for (Eigen::Index k = 1; k <= eq.n_delays(); ++k) {
    dsq += eq.d()[k] * eq.d()[k];
    s_coeff += eq.a()[k] * eq.a()[k] - eq.d()[k] * eq.d()[k] * a0 * a0;
  }

  Vector kv(m + 1), mv(m + 1), ev(m + 1);
  for (long i = 0; i <= m; ++i) {
    const double t = h * static_cast<double>(i);
    kv[i] = (s_coeff / dsq) * sinhc(a0, t);
    ev[i] = std::exp(-a0 * t);
    mv[i] = ev[i] / dsq;
  }
  const RealGridFunction expk(0.0, eps, ev);

  const FeedbackTail tail = feedback_tail(eq, state, eps, grid);
  Vector rhs = Vector::Zero(m + 1);
  for (Eigen::Index s = 1; s <= eq.n_delays(); ++s) {
    const auto& phi = tail.phi[s - 1];
    const RealGridFunction conv = convolve_kernel<double>(ev, phi);
    const double w = (eq.d()[s] * a0 - eq.a()[s]) / dsq;
    for (long i = 0; i <= m; ++i) rhs[i] += w * conv[i] - eq.d()[s] / dsq * phi[i];
  }
  return VolterraProblem{RealGridFunction(0.0, eps, std::move(kv)),
                         RealGridFunction(0.0, eps, std::move(rhs)),
                         RealGridFunction(0.0, eps, std::move(mv))};
}

namespace {

RealGridFunction volterra_with_mode(const VolterraProblem& vp, const MomentConstraints& mc) {
  auto family = [&](double c) {
    return volterra_solve(vp.kernel, vp.rhs + vp.mode * c, 0.0);
  };
  return constant_search(family, mc).second;
}

}  // namespace

RealGridFunction volterra_route_scalar(const DelayEquation& eq, const InitialState& state,
                                       double eps, const GridSpec& grid) {
  const MomentConstraints mc = moment_constraints(eq, state, eps, grid);
  const VolterraProblem vp = eq.is_simplest()
                                 ? volterra_problem_simplest(eq.a()[1], state, eps, grid)
                                 : volterra_problem_neutral(eq, state, eps, grid);
  return volterra_with_mode(vp, mc);
}

RealGridFunction volterra_route_system(const RetardedSystem& sys, const SystemInitialState& state,
                                       double eps, const GridSpec& grid) {
  const Eigen::Index n = sys.dim();
  const Vector& g = sys.companion_g();
  const long m = grid.index_of(eps);
  const double h = grid.h();

  // u + sum_k (-1)^k g_k^2/(2k-1)! t^{2k-1} * u = rhs; kernel of u - K*u form
  Vector kv = Vector::Zero(m + 1);
  double fact2 = 1.0;  // (2k-1)!
  double factorial = 1.0;
  Vector sign_coeff(n);
  for (Eigen::Index k = 1; k <= n; ++k) {
    fact2 = 1.0;
    for (Eigen::Index j = 2; j <= 2 * k - 1; ++j) fact2 *= static_cast<double>(j);
    const double s = (k % 2 == 0) ? 1.0 : -1.0;  // (-1)^k
    for (long i = 0; i <= m; ++i)
      kv[i] -= s * g[k - 1] * g[k - 1] *
               std::pow(h * static_cast<double>(i), static_cast<double>(2 * k - 1)) / fact2;
    sign_coeff[k - 1] = -s * g[k - 1] / factorial;  // (-1)^{k+1} g_k/(k-1)!
    factorial *= static_cast<double>(k);
  }
  const RealGridFunction kernel(0.0, eps, std::move(kv));

  const FeedbackTail tail = system_feedback_tail(sys, state, eps, grid);
  Vector rhs = Vector::Zero(m + 1);
  for (Eigen::Index k = 1; k <= n; ++k) {
    Vector pk(m + 1);
    for (long i = 0; i <= m; ++i)
      pk[i] = std::pow(h * static_cast<double>(i), static_cast<double>(k - 1));
    const RealGridFunction conv = convolve_kernel<double>(pk, tail.phi[k - 1]);
    rhs += sign_coeff[k - 1] * conv.data();
  }

  // affine family in q: base solve plus one solve per moment polynomial
  const RealGridFunction base =
      volterra_solve(kernel, RealGridFunction(0.0, eps, rhs), 0.0);
  std::vector<RealGridFunction> modes;
  for (Eigen::Index k = 1; k <= n; ++k) {
    Vector pw(m + 1);
    for (long i = 0; i <= m; ++i)
      pw[i] = std::pow(eps - h * static_cast<double>(i), static_cast<double>(k - 1));
    modes.push_back(volterra_solve(kernel, RealGridFunction(0.0, eps, std::move(pw)), 0.0));
  }

  const MomentConstraints mc = system_moment_constraints(sys, state, eps, grid);
  Matrix a(n, n);
  Vector b(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    b[j] = mc.rhs[j] - l2_inner(mc.kernels[j], base);
    for (Eigen::Index k = 0; k < n; ++k) a(j, k) = l2_inner(mc.kernels[j], modes[k]);
  }
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) throw DegenerateMomentSystem("volterra_route_system: singular q-system");
  const Vector q = lu.solve(b);
  Vector u = base.data();
  for (Eigen::Index k = 0; k < n; ++k) u += q[k] * modes[k].data();
  return RealGridFunction(0.0, eps, std::move(u));
}

}  // namespace delayctrl
