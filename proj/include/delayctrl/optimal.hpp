#pragma once

#include "delayctrl/admissible.hpp"

namespace delayctrl {

struct OptimalSolution {
  RealGridFunction generator;  // u0_hat on [0, eps]
  Vector constants;            // c (scalar problems) or q_1..q_n (systems)
  ControlSignal control;       // u_hat on [0, T]
  double energy;               // L2(0, T)-norm squared
};

/// x'(t) = a1 x(t-1) + u: minimum-energy generator in closed form
/// (hyperbolic-kernel convolution of the free trajectory).
OptimalSolution optimal_simplest(double a1, const InitialState& state, double eps,
                                 const GridSpec& grid);

/// General neutral equation; phi_s come from the admissible tail.
OptimalSolution optimal_neutral(const DelayEquation& eq, const InitialState& state, double eps,
                                const GridSpec& grid);

/// Retarded specialization (all d_k = 0).
OptimalSolution optimal_retarded(const DelayEquation& eq, const InitialState& state, double eps,
                                 const GridSpec& grid);

/// Companion systems: rational-symbol kernel (impulse plus exponentials from
/// the partial-fraction expansion), constants from the moment system.
OptimalSolution optimal_system(const RetardedSystem& sys, const SystemInitialState& state,
                               double eps, const GridSpec& grid);

/// Per-epsilon minimum energies; strictly decreasing in epsilon for nonzero
/// states.
std::vector<std::pair<double, double>> energy_curve(const DelayEquation& eq,
                                                    const InitialState& state,
                                                    const std::vector<double>& eps_list,
                                                    double target_h = 1e-3);
std::vector<std::pair<double, double>> energy_curve(const RetardedSystem& sys,
                                                    const SystemInitialState& state,
                                                    const std::vector<double>& eps_list,
                                                    double target_h = 1e-3);

}  // namespace delayctrl
