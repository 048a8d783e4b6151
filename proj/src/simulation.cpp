#include "delayctrl/simulation.hpp"

namespace delayctrl {

Trajectory<double> simulate(const DelayEquation& eq, const InitialState& state,
                            const ControlSignal& u, double t_end, const GridSpec& grid) {
  if (t_end > u.horizon() + 1e-12) throw HorizonExceeded("simulate: t_end exceeds u horizon");
  validate_state(eq, state);
  if (state.x0.intervals() != grid.per_unit) throw GridError("simulate: state grid mismatch");
  Vector ul, ur;
  u.sample_limits(grid, t_end, ul, ur);
  const Vector* dx = state.x0_deriv ? &state.x0_deriv->data() : nullptr;
  return detail::march<double>(eq, state.y, state.x0.data(), dx, ul, ur, t_end, grid);
}

RealGridFunction free_trajectory(const DelayEquation& eq, const InitialState& state, double upto,
                                 const GridSpec& grid) {
  if (upto > eq.delays()[1] + 1e-12)
    throw ConfigError("free_trajectory: formula valid only up to r_1");
  validate_state(eq, state);
  if (state.x0.intervals() != grid.per_unit) throw GridError("free_trajectory: grid mismatch");
  const long m_unit = grid.per_unit;
  const long n = grid.index_of(upto);
  if (n < 2) throw GridError("free_trajectory: need at least two steps");
  const double h = grid.h();
  const double a0 = eq.a0();
  const bool neutral_terms = !eq.is_retarded();

  std::vector<long> lag(eq.n_delays() + 1);
  for (Eigen::Index k = 0; k <= eq.n_delays(); ++k) lag[k] = grid.index_of(eq.delays()[k]);

  auto source = [&](long i) {
    double acc = 0.0;
    for (Eigen::Index k = 1; k <= eq.n_delays(); ++k) {
      const long j = m_unit + i - lag[k];  // history node (<= m_unit here)
      acc += eq.a()[k] * state.x0[j];
      if (neutral_terms && eq.d()[k] != 0.0) acc -= eq.d()[k] * (*state.x0_deriv)[j];
    }
    return acc;
  };

  Vector out(n + 1);
  out[0] = state.y;
  double running = 0.0;  // int_0^{t_i} e^{-a0 tau} source dtau
  double prev = source(0);
  for (long i = 1; i <= n; ++i) {
    const double cur = source(i);
    running += 0.5 * h * (std::exp(-a0 * h * static_cast<double>(i - 1)) * prev +
                          std::exp(-a0 * h * static_cast<double>(i)) * cur);
    out[i] = std::exp(a0 * h * static_cast<double>(i)) * (state.y + running);
    prev = cur;
  }
  return RealGridFunction(0.0, upto, std::move(out));
}

Trajectory<Complex> simulate_exponential_state(const DelayEquation& eq, Complex z, double t_end,
                                               const GridSpec& grid) {
  const long m_unit = grid.per_unit;
  ComplexVector hist(m_unit + 1), dhist(m_unit + 1);
  const Complex iz = Complex(0.0, 1.0) * z;
  for (long i = 0; i <= m_unit; ++i) {
    const double t = -1.0 + grid.h() * static_cast<double>(i);
    hist[i] = std::exp(iz * t);
    dhist[i] = iz * hist[i];
  }
  const long n = grid.index_of(t_end);
  const ComplexVector uz = ComplexVector::Zero(n + 1);
  const ComplexVector* dp = eq.is_retarded() ? nullptr : &dhist;
  return detail::march<Complex>(eq, Complex(1.0, 0.0), hist, dp, uz, uz, t_end, grid);
}

double null_residual(const Trajectory<double>& traj, double T) {
  const auto& x = traj.values;
  if (T > x.t_end() + 1e-12) throw HorizonExceeded("null_residual: trajectory shorter than T");
  const Eigen::Index i0 = x.index_at(T - 1.0), i1 = x.index_at(T);
  double m = 0.0;
  for (Eigen::Index i = i0; i <= i1; ++i) m = std::max(m, std::abs(x[i]));
  return m;
}

double null_residual(const SystemTrajectory& traj, double T) {
  double m = 0.0;
  for (const auto& comp : traj.components) {
    if (T > comp.t_end() + 1e-12)
      throw HorizonExceeded("null_residual: trajectory shorter than T");
    const Eigen::Index i0 = comp.index_at(T - 1.0), i1 = comp.index_at(T);
    for (Eigen::Index i = i0; i <= i1; ++i) m = std::max(m, std::abs(comp[i]));
  }
  return m;
}

namespace {

SystemTrajectory march_system(const RetardedSystem& sys, const SystemInitialState& state,
                              const Vector* ul, const Vector* ur, const RealGridFunction* u0,
                              double eps, double t_end, const GridSpec& grid,
                              Vector* fb_left, Vector* fb_right) {
  if (!sys.has_companion_form()) throw SolverError("system simulation requires companion form");
  const Vector& g = sys.companion_g();
  const Eigen::Index n = sys.dim();
  if (state.y.size() != n || static_cast<Eigen::Index>(state.x0.size()) != n)
    throw ConfigError("SystemInitialState: dimension mismatch");
  const long m_unit = grid.per_unit;
  const double h = grid.h();
  const long n_ctrl = grid.index_of(t_end);
  const long total = m_unit + n_ctrl;
  const bool feedback = (u0 != nullptr);
  const long i_eps = feedback ? grid.index_of(eps) : 0;
  if (feedback && u0->intervals() != i_eps) throw GridError("closed loop: u0 grid mismatch");

  std::vector<Vector> x(n, Vector::Zero(total + 1));
  Vector hist_end(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (state.x0[j].intervals() != m_unit) throw GridError("system state grid mismatch");
    for (long i = 0; i < m_unit; ++i) x[j][i] = state.x0[j][i];
    x[j][m_unit] = state.y[j];
    hist_end[j] = state.x0[j][m_unit];
  }
  auto xl = [&](Eigen::Index j, long i) { return i == m_unit ? hist_end[j] : x[j][i]; };
  auto xr = [&](Eigen::Index j, long i) { return x[j][i]; };

  if (feedback) {
    *fb_left = Vector::Zero(n_ctrl + 1);
    *fb_right = Vector::Zero(n_ctrl + 1);
  }
  // control limits at control node c (t = c h), evaluated lazily so the
  // feedback can read already-computed state values at t - 1
  auto u_left = [&](long c) {
    if (!feedback) return (*ul)[c];
    if (c <= i_eps) return (*u0)[c];
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) acc += g[j] * xl(j, c);
    return acc;
  };
  auto u_right = [&](long c) {
    if (!feedback) return (*ur)[c];
    if (c < i_eps) return (*u0)[c];
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) acc += g[j] * xr(j, c);
    return acc;
  };

  auto g_left = [&](Eigen::Index j, long i) {
    if (j == 0) {
      double acc = u_left(i - m_unit);
      for (Eigen::Index k = 0; k < n; ++k) acc -= g[k] * xl(k, i - m_unit);
      return acc;
    }
    return xl(j - 1, i - m_unit);
  };
  auto g_right = [&](Eigen::Index j, long i) {
    if (j == 0) {
      double acc = u_right(i - m_unit);
      for (Eigen::Index k = 0; k < n; ++k) acc -= g[k] * xr(k, i - m_unit);
      return acc;
    }
    return xr(j - 1, i - m_unit);
  };

  std::vector<double> prev(n);
  for (Eigen::Index j = 0; j < n; ++j) prev[j] = g_right(j, m_unit);
  for (long i = m_unit + 1; i <= total; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      x[j][i] = x[j][i - 1] + 0.5 * h * (prev[j] + g_left(j, i));
    for (Eigen::Index j = 0; j < n; ++j) prev[j] = g_right(j, i);
  }

  if (feedback) {
    for (long c = 0; c <= n_ctrl; ++c) {
      (*fb_left)[c] = u_left(c);
      (*fb_right)[c] = u_right(c);
    }
    (*fb_left)[0] = (*fb_right)[0];
  }

  SystemTrajectory out;
  for (Eigen::Index j = 0; j < n; ++j)
    out.components.emplace_back(-1.0, t_end, std::move(x[j]));
  return out;
}

}  // namespace

SystemTrajectory simulate_system(const RetardedSystem& sys, const SystemInitialState& state,
                                 const ControlSignal& u, double t_end, const GridSpec& grid) {
  if (t_end > u.horizon() + 1e-12)
    throw HorizonExceeded("simulate_system: t_end exceeds u horizon");
  Vector ul, ur;
  u.sample_limits(grid, t_end, ul, ur);
  return march_system(sys, state, &ul, &ur, nullptr, 0.0, t_end, grid, nullptr, nullptr);
}

ClosedLoopRun closed_loop_system(const RetardedSystem& sys, const SystemInitialState& state,
                                 const RealGridFunction& u0, double eps, double t_end,
                                 const GridSpec& grid) {
  Vector fb_l, fb_r;
  SystemTrajectory traj =
      march_system(sys, state, nullptr, nullptr, &u0, eps, t_end, grid, &fb_l, &fb_r);

  // Segment the realized control at the cascade breakpoints {eps, k, k+eps}.
  const Eigen::Index n = sys.dim();
  std::vector<double> cuts{0.0, eps};
  for (Eigen::Index k = 1; k <= n; ++k) {
    const double tk = static_cast<double>(k);
    if (tk < t_end - 1e-12 && tk > eps + 1e-12) cuts.push_back(tk);
    if (tk + eps < t_end + 1e-12 && tk + eps > eps + 1e-12) cuts.push_back(tk + eps);
  }
  cuts.push_back(t_end);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [](double a, double b) { return std::abs(a - b) < 1e-12; }),
             cuts.end());

  std::vector<ControlSegment> segs;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const long i0 = grid.index_of(cuts[s]), i1 = grid.index_of(cuts[s + 1]);
    Vector vals(i1 - i0 + 1);
    for (long i = i0; i <= i1; ++i) vals[i - i0] = (i == i0) ? fb_r[i] : fb_l[i];
    SegmentLabel lab = SegmentLabel::feedback;
    int idx = 0;
    if (s == 0) {
      lab = SegmentLabel::generator;
    } else {
      const double mid = 0.5 * (cuts[s] + cuts[s + 1]);
      const auto k = static_cast<int>(std::floor(mid));
      if (mid - std::floor(mid) < eps) {
        lab = SegmentLabel::phi;
        idx = k;
      } else {
        lab = SegmentLabel::psi;
        idx = k + 1;
      }
    }
    segs.push_back({RealGridFunction(cuts[s], cuts[s + 1], std::move(vals)), lab, idx});
  }
  ControlSignal control(t_end, eps, u0, std::move(segs));
  return ClosedLoopRun{std::move(traj), std::move(control)};
}

}  // namespace delayctrl
