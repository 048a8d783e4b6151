#include "delayctrl/admissible.hpp"

#include <Eigen/LU>

namespace delayctrl {

Vector MomentConstraints::residual(const RealGridFunction& u0) const {
  Vector r(rhs.size());
  for (Eigen::Index j = 0; j < rhs.size(); ++j) {
    if (!kernels[j].same_grid(u0)) throw GridError("MomentConstraints: grid mismatch");
    r[j] = l2_inner(kernels[j], u0) - rhs[j];
  }
  return r;
}

MomentConstraints moment_constraints(const DelayEquation& eq, const InitialState& state,
                                     double eps, const GridSpec& grid) {
  if (!(eps > 0.0) || !(eps < eq.delays()[1]))
    throw ConfigError("moment_constraints: need 0 < eps < r_1");
  validate_state(eq, state);
  const long m = grid.index_of(eps);
  const double a0 = eq.a0();
  Vector k(m + 1);
  for (long i = 0; i <= m; ++i) k[i] = std::exp(a0 * (eps - grid.h() * static_cast<double>(i)));
  const RealGridFunction xfree = free_trajectory(eq, state, eps, grid);
  Vector rhs(1);
  rhs[0] = -xfree[xfree.size() - 1];
  return MomentConstraints{{RealGridFunction(0.0, eps, std::move(k))}, rhs};
}

MomentConstraints system_moment_constraints(const RetardedSystem& sys,
                                            const SystemInitialState& state, double eps,
                                            const GridSpec& grid) {
  if (!sys.has_companion_form())
    throw SolverError("system_moment_constraints: companion form required");
  if (!(eps > 0.0) || !(eps < 1.0)) throw ConfigError("need 0 < eps < 1");
  const Eigen::Index n = sys.dim();
  const long m = grid.index_of(eps);
  const double h = grid.h();

  std::vector<RealGridFunction> kernels;
  for (Eigen::Index k = 1; k <= n; ++k) {
    Vector kv(m + 1);
    for (long i = 0; i <= m; ++i)
      kv[i] = std::pow(eps - h * static_cast<double>(i), static_cast<double>(k - 1));
    kernels.emplace_back(0.0, eps, std::move(kv));
  }

  // Closed-loop run with zero generator exposes the state-determined offsets
  // beta_k = x_k(k-1+eps); the u0 kernel contributes (eps-tau)^{k-1}/(k-1)!.
  const RealGridFunction u0 = RealGridFunction::zero(0.0, eps, m);
  const double t_end = static_cast<double>(n) + eps;
  ClosedLoopRun run = closed_loop_system(sys, state, u0, eps, t_end, grid);
  Vector rhs(n);
  double factorial = 1.0;
  for (Eigen::Index k = 1; k <= n; ++k) {
    const auto& comp = run.trajectory.components[k - 1];
    const double beta = comp[comp.index_at(static_cast<double>(k - 1) + eps)];
    rhs[k - 1] = -factorial * beta;
    factorial *= static_cast<double>(k);
  }
  return MomentConstraints{std::move(kernels), std::move(rhs)};
}

FeedbackTail feedback_tail(const DelayEquation& eq, const InitialState& state, double eps,
                           const GridSpec& grid) {
  if (!(eps > 0.0) || !(eps < eq.delays()[1]))
    throw ConfigError("feedback_tail: need 0 < eps < r_1");
  if (eps > eq.min_gap() + 1e-12)
    throw ConfigError("feedback_tail: eps must not exceed the smallest delay gap");
  validate_state(eq, state);
  const Eigen::Index big_n = eq.n_delays();
  const long m_unit = grid.per_unit;
  const long m_eps = grid.index_of(eps);
  const double h = grid.h();

  auto hist = [&](long node) { return state.x0[node]; };
  auto dhist = [&](long node) { return state.x0_deriv ? (*state.x0_deriv)[node] : 0.0; };
  std::vector<long> lag(big_n + 1);
  for (Eigen::Index k = 0; k <= big_n; ++k) lag[k] = grid.index_of(eq.delays()[k]);

  FeedbackTail tail;
  const RealGridFunction xfree = free_trajectory(eq, state, eps, grid);

  for (Eigen::Index s = 1; s <= big_n; ++s) {
    // psi_s(theta) = sum_{k>=s} [d_k x0'(theta + r_s - r_k) - a_k x0(theta + r_s - r_k)]
    const long len = lag[s] - lag[s - 1] - m_eps;  // nodes of [r_{s-1}+eps-r_s, 0]
    if (len < 1) {
      tail.psi.emplace_back(std::nullopt);
    } else {
      Vector vals(len + 1);
      for (long i = 0; i <= len; ++i) {
        const long theta_node = i - len;  // theta = theta_node * h
        double acc = 0.0;
        for (Eigen::Index k = s; k <= big_n; ++k) {
          const long node = m_unit + theta_node + lag[s] - lag[k];
          acc += eq.d()[k] * dhist(node) - eq.a()[k] * hist(node);
        }
        vals[i] = acc;
      }
      const double t0 = -static_cast<double>(len) * h;
      tail.psi.emplace_back(RealGridFunction(t0, 0.0, std::move(vals)));
    }

    // phi_s(theta) on [0, eps]
    Vector vals(m_eps + 1);
    const double ds = eq.d()[s], as = eq.a()[s];
    for (long i = 0; i <= m_eps; ++i) {
      double acc = (ds * eq.a0() - as) * xfree[i];
      for (Eigen::Index k = s + 1; k <= big_n; ++k) {
        const long node = m_unit + i + lag[s] - lag[k];
        acc += eq.d()[k] * dhist(node) - eq.a()[k] * hist(node);
      }
      if (ds != 0.0) {
        double inner = 0.0;
        for (Eigen::Index k = 1; k <= big_n; ++k) {
          const long node = m_unit + i - lag[k];
          inner += eq.d()[k] * dhist(node) - eq.a()[k] * hist(node);
        }
        acc -= ds * inner;
      }
      vals[i] = acc;
    }
    tail.phi.emplace_back(RealGridFunction(0.0, eps, std::move(vals)));
  }
  return tail;
}

RealGridFunction exp_weighted_integral(double a0, const RealGridFunction& u) {
  const Eigen::Index n = u.size();
  const double h = u.step();
  const double growth = std::exp(a0 * h);
  Vector out(n);
  out[0] = 0.0;
  for (Eigen::Index i = 1; i < n; ++i)
    out[i] = growth * out[i - 1] + 0.5 * h * (growth * u[i - 1] + u[i]);
  return RealGridFunction(u.t_start(), u.t_end(), std::move(out));
}

ControlSignal assemble_control(const DelayEquation& eq, const InitialState& state,
                               const RealGridFunction& u0, const GridSpec& grid, double tau_m) {
  const double eps = u0.t_end();
  if (std::abs(u0.t_start()) > 1e-12) throw ConfigError("assemble_control: u0 must start at 0");
  const MomentConstraints mc = moment_constraints(eq, state, eps, grid);
  const Vector res = mc.residual(u0);
  if (res.cwiseAbs().maxCoeff() > tau_m)
    throw MomentViolation("assemble_control: moment residual " +
                          std::to_string(res.cwiseAbs().maxCoeff()) + " exceeds tolerance");

  const FeedbackTail tail = feedback_tail(eq, state, eps, grid);
  const RealGridFunction conv = exp_weighted_integral(eq.a0(), u0);
  const Eigen::Index big_n = eq.n_delays();

  std::vector<ControlSegment> segs;
  segs.push_back({u0, SegmentLabel::generator, 0});
  for (Eigen::Index s = 1; s <= big_n; ++s) {
    const double rs = eq.delays()[s];
    if (tail.psi[s - 1]) {
      segs.push_back({tail.psi[s - 1]->shifted(rs), SegmentLabel::psi, static_cast<int>(s)});
    }
    const auto& phi = tail.phi[s - 1];
    Vector vals(phi.size());
    const double ds = eq.d()[s], coupling = ds * eq.a0() - eq.a()[s];
    for (Eigen::Index i = 0; i < phi.size(); ++i)
      vals[i] = phi[i] + ds * u0[i] + coupling * conv[i];
    segs.push_back({RealGridFunction(rs, rs + eps, std::move(vals)), SegmentLabel::phi,
                    static_cast<int>(s)});
  }
  return ControlSignal(1.0 + eps, eps, u0, std::move(segs));
}

ControlSignal assemble_system_control(const RetardedSystem& sys, const SystemInitialState& state,
                                      const RealGridFunction& u0, const GridSpec& grid,
                                      double tau_m) {
  const double eps = u0.t_end();
  const MomentConstraints mc = system_moment_constraints(sys, state, eps, grid);
  const Vector res = mc.residual(u0);
  if (res.cwiseAbs().maxCoeff() > tau_m)
    throw MomentViolation("assemble_system_control: moment residual " +
                          std::to_string(res.cwiseAbs().maxCoeff()) + " exceeds tolerance");
  const double t_end = static_cast<double>(sys.dim()) + eps;
  return closed_loop_system(sys, state, u0, eps, t_end, grid).control;
}

FeedbackTail system_feedback_tail(const RetardedSystem& sys, const SystemInitialState& state,
                                  double eps, const GridSpec& grid) {
  const Eigen::Index n = sys.dim();
  const Vector& g = sys.companion_g();
  const MomentConstraints mc = system_moment_constraints(sys, state, eps, grid);
  const long m = grid.index_of(eps);
  const double h = grid.h();

  // any feasible generator works; the least-norm one is convenient
  const RealGridFunction feas =
      project_onto_constraints(RealGridFunction::zero(0.0, eps, m), mc);
  const double t_end = static_cast<double>(n) + eps;
  const ClosedLoopRun run = closed_loop_system(sys, state, feas, eps, t_end, grid);

  FeedbackTail tail;
  double factorial = 1.0;
  for (Eigen::Index k = 1; k <= n; ++k) {
    // psi_k: the control on [k-1+eps, k] shifted to [eps-1, 0]
    for (const auto& seg : run.control.segments()) {
      if (seg.label == SegmentLabel::psi && seg.index == k)
        tail.psi.emplace_back(seg.values.shifted(-static_cast<double>(k)));
    }
    if (static_cast<Eigen::Index>(tail.psi.size()) < k) tail.psi.emplace_back(std::nullopt);

    // phi_k: control on [k, k+eps] minus the explicit generator kernel
    const RealGridFunction* phi_seg = nullptr;
    for (const auto& seg : run.control.segments())
      if (seg.label == SegmentLabel::phi && seg.index == k) phi_seg = &seg.values;
    if (!phi_seg) throw SolverError("system_feedback_tail: missing phi segment");
    Vector kernel(m + 1);
    for (long i = 0; i <= m; ++i)
      kernel[i] = std::pow(h * static_cast<double>(i), static_cast<double>(k - 1));
    const RealGridFunction kterm = convolve_kernel<double>(kernel, feas) * (g[k - 1] / factorial);
    Vector vals(m + 1);
    for (long i = 0; i <= m; ++i) vals[i] = (*phi_seg)[i] - kterm[i];
    tail.phi.emplace_back(RealGridFunction(0.0, eps, std::move(vals)));
    factorial *= static_cast<double>(k);
  }
  return tail;
}

RealGridFunction project_onto_constraints(const RealGridFunction& u0,
                                          const MomentConstraints& mc) {
  const Eigen::Index nc = mc.rhs.size();
  const Eigen::Index nodes = u0.size();
  const Vector w = trapezoid_weights(nodes, u0.step());
  Matrix gram(nc, nc);
  Vector defect(nc);
  for (Eigen::Index j = 0; j < nc; ++j) {
    defect[j] = l2_inner(mc.kernels[j], u0) - mc.rhs[j];
    for (Eigen::Index l = 0; l < nc; ++l) gram(j, l) = l2_inner(mc.kernels[j], mc.kernels[l]);
  }
  Eigen::PartialPivLU<Matrix> lu(gram);
  const Vector alpha = lu.solve(defect);
  Vector out = u0.data();
  for (Eigen::Index j = 0; j < nc; ++j)
    for (Eigen::Index i = 0; i < nodes; ++i) out[i] -= alpha[j] * mc.kernels[j][i];
  return RealGridFunction(u0.t_start(), u0.t_end(), std::move(out));
}

InitialState reconstruct_state(const DelayEquation& eq, const ControlSignal& u) {
  if (!eq.is_simplest()) throw ConfigError("reconstruct_state: one-delay retarded equation only");
  const double a1 = eq.a()[1];
  if (a1 == 0.0) throw SolverError("reconstruct_state: a_1 = 0 has no inverse map");
  const double eps = u.epsilon();
  const double h = u.segments().front().values.step();
  const GridSpec grid{std::lround(1.0 / h)};
  if (std::abs(grid.h() - h) > 1e-12 * h) throw GridError("reconstruct_state: off-lattice grid");

  Vector ul, ur;
  u.sample_limits(grid, 1.0 + eps, ul, ur);
  const long i_end = grid.index_of(1.0 + eps);
  const double scale = 1.0 + ul.cwiseAbs().maxCoeff();
  if (std::abs(ul[i_end]) > 1e-6 * scale)
    throw MomentViolation("reconstruct_state: u(1+eps) must vanish (W^{1,2}-hat endpoint)");

  const long m_unit = grid.per_unit;
  const long i_one = grid.index_of(1.0);
  const long i_eps = grid.index_of(eps);
  const double y = -ur[i_one] / a1;

  // derivative of the tail w on [1, 1+eps] by second-order differences
  const long tail_len = i_end - i_one;
  Vector dw(tail_len + 1);
  auto wv = [&](long j) { return (j == 0) ? ur[i_one] : ul[i_one + j]; };
  dw[0] = (-3.0 * wv(0) + 4.0 * wv(1) - wv(2)) / (2.0 * h);
  for (long j = 1; j < tail_len; ++j) dw[j] = (wv(j + 1) - wv(j - 1)) / (2.0 * h);
  dw[tail_len] = (3.0 * wv(tail_len) - 4.0 * wv(tail_len - 1) + wv(tail_len - 2)) / (2.0 * h);

  Vector x0(m_unit + 1);
  for (long j = 0; j <= m_unit; ++j) {
    if (j < i_eps) {
      // theta in [-1, -1+eps): x0 = -u'(theta+2)/a1^2 - u0(theta+1)/a1
      x0[j] = -dw[j] / (a1 * a1) - ur[j] / a1;
    } else if (j < m_unit) {
      x0[j] = -ur[i_one - m_unit + j] / a1;  // -u(theta+1)/a1
    } else {
      x0[j] = -ul[i_one] / a1;  // left limit at theta = 0
    }
  }
  return InitialState{y, RealGridFunction(-1.0, 0.0, std::move(x0)), std::nullopt};
}

}  // namespace delayctrl
