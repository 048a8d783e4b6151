#pragma once

#include <optional>

#include "delayctrl/control.hpp"
#include "delayctrl/simulation.hpp"

namespace delayctrl {

/// Linear moment functionals int_0^eps kernel_j(tau) u0(tau) dtau = rhs_j
/// that a generator must satisfy to steer the trajectory to zero.
struct MomentConstraints {
  std::vector<RealGridFunction> kernels;  // on [0, eps]
  Vector rhs;

  Vector residual(const RealGridFunction& u0) const;
};

/// State-determined tail of the admissible controls: psi_s on its (possibly
/// empty) interval [r_{s-1}+eps-r_s, 0], phi_s on [0, eps].
struct FeedbackTail {
  std::vector<std::optional<RealGridFunction>> psi;
  std::vector<RealGridFunction> phi;
};

/// Scalar equations: single kernel e^{a0 (eps - tau)}, rhs = -x_free(eps).
MomentConstraints moment_constraints(const DelayEquation& eq, const InitialState& state,
                                     double eps, const GridSpec& grid);

/// Companion systems: kernels (eps - tau)^{k-1}; the constants are read off
/// a closed-loop run with zero generator and normalized by the known
/// cascade kernel (c_k = -(k-1)! x_k(k-1+eps)).
MomentConstraints system_moment_constraints(const RetardedSystem& sys,
                                            const SystemInitialState& state, double eps,
                                            const GridSpec& grid);

FeedbackTail feedback_tail(const DelayEquation& eq, const InitialState& state, double eps,
                           const GridSpec& grid);

/// phi_k / psi_k of the companion cascade, extracted from a closed-loop run
/// with a feasible generator (the explicit u0 kernel is subtracted, leaving
/// the state-determined part).
FeedbackTail system_feedback_tail(const RetardedSystem& sys, const SystemInitialState& state,
                                  double eps, const GridSpec& grid);

/// Full admissible control on [0, 1+eps] generated by u0 (which must satisfy
/// the moment constraints within tau_m).
ControlSignal assemble_control(const DelayEquation& eq, const InitialState& state,
                               const RealGridFunction& u0, const GridSpec& grid,
                               double tau_m = 1e-8);

/// Full admissible control on [0, n+eps] via the stopping feedback.
ControlSignal assemble_system_control(const RetardedSystem& sys, const SystemInitialState& state,
                                      const RealGridFunction& u0, const GridSpec& grid,
                                      double tau_m = 1e-8);

/// Inverse map for the one-delay retarded equation: recovers the unique
/// (y, x0) whose admissible family contains u.
InitialState reconstruct_state(const DelayEquation& eq, const ControlSignal& u);

/// Projection of u0 onto the affine constraint set (quadrature-weighted
/// least-norm correction); used to produce feasible random generators.
RealGridFunction project_onto_constraints(const RealGridFunction& u0,
                                          const MomentConstraints& mc);

/// Exponential-weight running integral int_0^t e^{a0 (t - tau)} u(tau) dtau,
/// quadrature-identical to the simulation stepping.
RealGridFunction exp_weighted_integral(double a0, const RealGridFunction& u);

}  // namespace delayctrl
