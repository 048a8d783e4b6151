#pragma once

#include <optional>

#include "delayctrl/control.hpp"
#include "delayctrl/equation.hpp"

namespace delayctrl {

/// Trajectory on [-1, t_end]; the derivative channel is carried for neutral
/// runs (it is read back by the delayed x'(t - r_k) terms).
template <typename S>
struct Trajectory {
  GridFunction<S> values;
  std::optional<GridFunction<S>> deriv;
};

struct SystemTrajectory {
  std::vector<RealGridFunction> components;  // each on [-1, t_end]
};

namespace detail {

/// Method-of-steps marching core on the uniform lattice.  Delayed arguments
/// are exact node lookups; jumps (the M^2 mismatch y != x0(0), control
/// breakpoints) are carried as left/right limits so every trapezoid step
/// integrates a smooth piece.
template <typename S>
Trajectory<S> march(const DelayEquation& eq, S y,
                    const Eigen::Matrix<S, Eigen::Dynamic, 1>& hist_x,
                    const Eigen::Matrix<S, Eigen::Dynamic, 1>* hist_dx,
                    const Eigen::Matrix<S, Eigen::Dynamic, 1>& u_left,
                    const Eigen::Matrix<S, Eigen::Dynamic, 1>& u_right, double t_end,
                    const GridSpec& grid) {
  using Storage = Eigen::Matrix<S, Eigen::Dynamic, 1>;
  const long m_unit = grid.per_unit;
  const double h = grid.h();
  const long n_ctrl = grid.index_of(t_end);
  const long total = m_unit + n_ctrl;  // node count - 1 over [-1, t_end]
  if (hist_x.size() != m_unit + 1) throw GridError("simulate: history grid mismatch");
  if (u_left.size() < n_ctrl + 1) throw GridError("simulate: control samples too short");

  const Eigen::Index n_delay = eq.n_delays();
  std::vector<long> lag(n_delay + 1);
  for (Eigen::Index k = 0; k <= n_delay; ++k) lag[k] = grid.index_of(eq.delays()[k]);
  const bool carry_deriv = !eq.is_retarded();
  if (carry_deriv && hist_dx == nullptr)
    throw MissingDerivative("simulate: neutral run without derivative history");

  Storage x(total + 1), dxl, dxr;
  for (long i = 0; i < m_unit; ++i) x[i] = hist_x[i];
  x[m_unit] = y;
  const S hist_end = hist_x[m_unit];  // left limit of the state at t = 0

  if (carry_deriv) {
    dxl.resize(total + 1);
    dxr.resize(total + 1);
    for (long i = 0; i <= m_unit; ++i) {
      dxl[i] = (*hist_dx)[i];
      dxr[i] = (*hist_dx)[i];
    }
  }

  const double a0 = eq.a0();
  auto x_left = [&](long j) -> S { return j == m_unit ? hist_end : x[j]; };
  auto x_right = [&](long j) -> S { return x[j]; };  // x[m_unit] = y already

  // Delay sums (everything on the right-hand side except a0 x(t) and u).
  auto g_left = [&](long i) -> S {
    S acc = u_left[i - m_unit];
    for (Eigen::Index k = 1; k <= n_delay; ++k) {
      const long j = i - lag[k];
      acc += S(eq.a()[k]) * x_left(j);
      if (carry_deriv && eq.d()[k] != 0.0) acc -= S(eq.d()[k]) * dxl[j];
    }
    return acc;
  };
  auto g_right = [&](long i) -> S {
    S acc = u_right[i - m_unit];
    for (Eigen::Index k = 1; k <= n_delay; ++k) {
      const long j = i - lag[k];
      acc += S(eq.a()[k]) * x_right(j);
      if (carry_deriv && eq.d()[k] != 0.0) acc -= S(eq.d()[k]) * dxr[j];
    }
    return acc;
  };

  if (carry_deriv) dxr[m_unit] = S(a0) * x[m_unit] + g_right(m_unit);

  const double growth = std::exp(a0 * h);
  S prev_gr = g_right(m_unit);
  for (long i = m_unit + 1; i <= total; ++i) {
    const S gl = g_left(i);
    x[i] = S(growth) * x[i - 1] + S(0.5 * h) * (S(growth) * prev_gr + gl);
    const S gr = g_right(i);
    if (carry_deriv) {
      dxl[i] = S(a0) * x[i] + gl;
      dxr[i] = S(a0) * x[i] + gr;
    }
    prev_gr = gr;
  }

  Trajectory<S> out{GridFunction<S>(-1.0, t_end, std::move(x)), std::nullopt};
  if (carry_deriv) {
    Storage d(total + 1);
    for (long i = 0; i < total; ++i) d[i] = dxr[i];
    d[total] = dxl[total];
    out.deriv = GridFunction<S>(-1.0, t_end, std::move(d));
  }
  return out;
}

}  // namespace detail

/// Trajectory of the initial value problem under the control u, advanced
/// window by window so every delayed argument refers to computed history.
Trajectory<double> simulate(const DelayEquation& eq, const InitialState& state,
                            const ControlSignal& u, double t_end, const GridSpec& grid);

/// Zero-control trajectory on [0, upto], upto <= r_1 (explicit
/// variation-of-constants form; node-identical to simulate with u = 0).
RealGridFunction free_trajectory(const DelayEquation& eq, const InitialState& state, double upto,
                                 const GridSpec& grid);

/// Trajectory from the exponential initial state (1, e^{i z t}) with u = 0.
Trajectory<Complex> simulate_exponential_state(const DelayEquation& eq, Complex z, double t_end,
                                               const GridSpec& grid);

/// max over nodes in [T-1, T] of |x(t)|.
double null_residual(const Trajectory<double>& traj, double T);
double null_residual(const SystemTrajectory& traj, double T);

/// Companion cascade x_1' = -sum g_k x_k(t-1) + u, x_{j+1}' = x_j(t-1).
SystemTrajectory simulate_system(const RetardedSystem& sys, const SystemInitialState& state,
                                 const ControlSignal& u, double t_end, const GridSpec& grid);

struct ClosedLoopRun {
  SystemTrajectory trajectory;
  ControlSignal control;
};

/// Runs the cascade with u = u0 on [0, eps) and the stopping feedback
/// u(t) = sum_k g_k x_k(t-1) afterwards; returns the control it realized.
ClosedLoopRun closed_loop_system(const RetardedSystem& sys, const SystemInitialState& state,
                                 const RealGridFunction& u0, double eps, double t_end,
                                 const GridSpec& grid);

}  // namespace delayctrl
