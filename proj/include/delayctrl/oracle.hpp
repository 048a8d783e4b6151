#pragma once

#include <functional>

#include "delayctrl/admissible.hpp"

namespace delayctrl {

/// Discretized equality-constrained quadratic program
///   Phi(u) = ||u||_w^2 + sum_s ||phi_s + (alpha_s I + beta_s V_s) u||_w^2
/// over the generator grid, with the moment functionals as constraints.
/// Strictly convex: the Hessian dominates diag(w) > 0.
struct QuadraticProgram {
  struct AffineOp {
    Vector offset;        // phi_s at the nodes
    double ident_coeff;   // alpha_s
    double kernel_coeff;  // beta_s
    int kernel_id;        // index into kernels, or -1 when beta_s = 0
  };

  double t0 = 0.0, t1 = 0.0;
  Vector weights;
  std::vector<Matrix> kernels;  // lower-triangular running-integral operators
  std::vector<AffineOp> ops;
  Matrix constraint_rows;  // K_{ji} = w_i kappa_j(tau_i)
  Vector constraint_rhs;

  Eigen::Index dim() const { return weights.size(); }
  Matrix hessian() const;
  Vector gradient() const;
  double objective(const Vector& u) const;
  Vector constraint_residual(const Vector& u) const;
};

QuadraticProgram qp_from_equation(const DelayEquation& eq, const InitialState& state, double eps,
                                  const GridSpec& grid);
QuadraticProgram qp_from_system(const RetardedSystem& sys, const SystemInitialState& state,
                                double eps, const GridSpec& grid);

/// Solves the saddle-point system [H K^T; K 0][u; lambda] = [-g; c] by dense
/// factorization and returns the unique minimizer.
RealGridFunction kkt_solve(const QuadraticProgram& qp);

/// Second-kind Volterra equation u - k*u = rhs + c by forward substitution
/// on the triangular discretized convolution.
RealGridFunction volterra_solve(const RealGridFunction& kernel, const RealGridFunction& rhs,
                                double c);

/// Family member u(c) is affine in c; picks c so that the single moment
/// constraint holds (evaluates at c = 0, 1 and interpolates).
std::pair<double, RealGridFunction> constant_search(
    const std::function<RealGridFunction(double)>& family, const MomentConstraints& constraints);

/// Volterra form u - kernel*u = rhs + c*mode of the reduced optimality
/// condition for scalar equations.
struct VolterraProblem {
  RealGridFunction kernel;
  RealGridFunction rhs;
  RealGridFunction mode;
};

VolterraProblem volterra_problem_simplest(double a1, const InitialState& state, double eps,
                                          const GridSpec& grid);
VolterraProblem volterra_problem_neutral(const DelayEquation& eq, const InitialState& state,
                                         double eps, const GridSpec& grid);

/// Generator recovered from the Volterra route (forward substitution plus
/// constant search); independent of the inverse-transform closed form.
RealGridFunction volterra_route_scalar(const DelayEquation& eq, const InitialState& state,
                                       double eps, const GridSpec& grid);
RealGridFunction volterra_route_system(const RetardedSystem& sys, const SystemInitialState& state,
                                       double eps, const GridSpec& grid);

}  // namespace delayctrl
