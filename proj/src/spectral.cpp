#include "delayctrl/spectral.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <random>

#include "delayctrl/optimal.hpp"
#include "delayctrl/simulation.hpp"

namespace delayctrl {

Complex char_function(const DelayEquation& eq, Complex z) {
  const Complex iz = Complex(0.0, 1.0) * z;
  Complex acc = iz * std::exp(iz) - eq.a()[0] * std::exp(iz);
  for (Eigen::Index k = 1; k <= eq.n_delays(); ++k) {
    const Complex e = std::exp(iz * (1.0 - eq.delays()[k]));
    acc += eq.d()[k] * iz * e - eq.a()[k] * e;
  }
  return acc;
}

Complex char_function_deriv(const DelayEquation& eq, Complex z) {
  const Complex i(0.0, 1.0);
  // d/dz [iz e^{icz}] = e^{icz} (i - cz),  d/dz [-a e^{icz}] = -a i c e^{icz}
  Complex acc = std::exp(i * z) * (i - z) - eq.a()[0] * i * std::exp(i * z);
  for (Eigen::Index k = 1; k <= eq.n_delays(); ++k) {
    const double c = 1.0 - eq.delays()[k];
    const Complex e = std::exp(i * c * z);
    acc += eq.d()[k] * e * (i - c * z);
    acc -= eq.a()[k] * i * c * e;
  }
  return acc;
}

namespace {

double boundary_min(const DelayEquation& eq, const Window& w, int samples_per_edge = 200) {
  const Complex corners[5] = {{w.re0, w.im0}, {w.re1, w.im0}, {w.re1, w.im1},
                              {w.re0, w.im1}, {w.re0, w.im0}};
  double best = std::numeric_limits<double>::infinity();
  for (int e = 0; e < 4; ++e)
    for (int s = 0; s <= samples_per_edge; ++s) {
      const double t = static_cast<double>(s) / samples_per_edge;
      const Complex z = corners[e] + t * (corners[e + 1] - corners[e]);
      best = std::min(best, std::abs(char_function(eq, z)));
    }
  return best;
}

/// Accumulated change of arg D along [z0, z1].  Each piece is accepted only
/// when the direct increment agrees with the two half increments, so phase
/// aliasing on a piece is caught by its own midpoint.
double edge_arg_change(const DelayEquation& eq, Complex z0, Complex z1, Complex d0, Complex d1,
                       int depth) {
  if (std::abs(d0) == 0.0 || std::abs(d1) == 0.0)
    throw SolverError("winding_number: zero of D on the contour");
  const Complex zm = 0.5 * (z0 + z1);
  const Complex dm = char_function(eq, zm);
  const double direct = std::arg(d1 / d0);
  const double left = std::arg(dm / d0);
  const double right = std::arg(d1 / dm);
  const bool fine_enough = std::abs(direct) < 0.5 * M_PI && std::abs(left) < 0.5 * M_PI &&
                           std::abs(right) < 0.5 * M_PI &&
                           std::abs(direct - left - right) < 1e-9;
  if (fine_enough && depth <= 0) return left + right;
  if (depth <= -40) throw SolverError("winding_number: contour refinement stalled");
  return edge_arg_change(eq, z0, zm, d0, dm, depth - 1) +
         edge_arg_change(eq, zm, z1, dm, d1, depth - 1);
}

long winding_or_throw(const DelayEquation& eq, const Window& w) {
  const Complex corners[5] = {{w.re0, w.im0}, {w.re1, w.im0}, {w.re1, w.im1},
                              {w.re0, w.im1}, {w.re0, w.im0}};
  double total = 0.0;
  for (int e = 0; e < 4; ++e) {
    // start below zero depth only after an initial 2^4 split per edge
    total += edge_arg_change(eq, corners[e], corners[e + 1], char_function(eq, corners[e]),
                             char_function(eq, corners[e + 1]), 4);
  }
  const double count = total / (2.0 * M_PI);
  const long rounded = std::lround(count);
  if (std::abs(count - static_cast<double>(rounded)) > 1e-3)
    throw SolverError("winding_number: argument sum is not an integer multiple of 2 pi");
  return rounded;
}

struct ZeroAccumulator {
  std::vector<Complex> zeros;
};

bool newton_polish(const DelayEquation& eq, Complex& z, int iters = 80) {
  for (int it = 0; it < iters; ++it) {
    const Complex d = char_function(eq, z);
    const Complex dp = char_function_deriv(eq, z);
    if (std::abs(dp) == 0.0) return false;
    const Complex step = d / dp;
    z -= step;
    if (std::abs(step) < 1e-15 * (1.0 + std::abs(z))) return true;
  }
  return std::abs(char_function(eq, z)) < 1e-9;
}

void subdivide(const DelayEquation& eq, const Window& w, long count, ZeroAccumulator& acc,
               int depth) {
  if (count == 0) return;
  if (depth > 80) throw SolverError("find_zeros: subdivision depth exceeded");

  if (count == 1) {
    Complex z(0.5 * (w.re0 + w.re1), 0.5 * (w.im0 + w.im1));
    if (newton_polish(eq, z) && z.real() > w.re0 - 1e-9 && z.real() < w.re1 + 1e-9 &&
        z.imag() > w.im0 - 1e-9 && z.imag() < w.im1 + 1e-9) {
      acc.zeros.push_back(z);
      return;
    }
  }

  // split the longer side; a stalled winding means the cut ran through a
  // zero, so try other cut fractions
  const bool wide = (w.re1 - w.re0) >= (w.im1 - w.im0);
  const double fracs[5] = {0.5, 0.43, 0.59, 0.47, 0.55};
  for (double frac : fracs) {
    Window a = w, b = w;
    if (wide) {
      const double cut = w.re0 + frac * (w.re1 - w.re0);
      a.re1 = cut;
      b.re0 = cut;
    } else {
      const double cut = w.im0 + frac * (w.im1 - w.im0);
      a.im1 = cut;
      b.im0 = cut;
    }
    if (boundary_min(eq, a, 64) < 1e-9) continue;
    long ca = 0, cb = 0;
    try {
      ca = winding_or_throw(eq, a);
      cb = winding_or_throw(eq, b);
    } catch (const SolverError&) {
      continue;
    }
    if (ca + cb != count) continue;
    subdivide(eq, a, ca, acc, depth + 1);
    subdivide(eq, b, cb, acc, depth + 1);
    return;
  }
  throw SolverError("find_zeros: could not split cell without hitting a zero");
}

}  // namespace

long winding_number(const DelayEquation& eq, const Window& w) { return winding_or_throw(eq, w); }

Window default_window(const DelayEquation& eq) {
  double asum = 0.0, dsum = 0.0;
  for (Eigen::Index k = 0; k <= eq.n_delays(); ++k) asum += std::abs(eq.a()[k]);
  for (Eigen::Index k = 1; k <= eq.n_delays(); ++k) dsum += std::abs(eq.d()[k]);
  const double re = 20.0 * M_PI;
  if (eq.is_neutral()) {
    const double s = 2.0 + std::log((asum + dsum + 1.0) / std::abs(eq.d()[eq.n_delays()]));
    return Window{-re, re, -s, s};
  }
  const double below = 2.0 + std::log(asum + 1.0);
  const double above = 2.0 + std::log((asum + 1.0) * (1.0 + re));
  return Window{-re, re, -below, above};
}

Spectrum find_zeros(const DelayEquation& eq, Window window) {
  // nudge the window until no zero sits on or near the boundary
  double pad = std::max(1e-4, 1e-3 * std::max(window.re1 - window.re0, window.im1 - window.im0));
  int nudges = 0;
  long count = 0;
  while (true) {
    if (nudges > 10) throw SolverError("find_zeros: boundary zero persists after 10 nudges");
    if (boundary_min(eq, window) >= 1e-8) {
      try {
        count = winding_or_throw(eq, window);
        break;
      } catch (const SolverError&) {
        // a zero sits on the contour; widen and retry
      }
    }
    ++nudges;
    window.re0 -= pad;
    window.re1 += pad;
    window.im0 -= pad;
    window.im1 += pad;
    pad *= 1.7;
  }
  ZeroAccumulator acc;
  subdivide(eq, window, count, acc, 0);
  if (static_cast<long>(acc.zeros.size()) != count)
    throw SolverError("find_zeros: zero count does not match the argument principle");

  std::sort(acc.zeros.begin(), acc.zeros.end(), [](Complex a, Complex b) {
    if (std::abs(std::abs(a) - std::abs(b)) > 1e-12) return std::abs(a) < std::abs(b);
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });

  Spectrum spec;
  spec.neutral = eq.is_neutral();
  double asum = 0.0, dsum = 0.0;
  for (Eigen::Index k = 0; k <= eq.n_delays(); ++k) asum += std::abs(eq.a()[k]);
  for (Eigen::Index k = 1; k <= eq.n_delays(); ++k) dsum += std::abs(eq.d()[k]);
  spec.strip_bound = spec.neutral
                         ? 2.0 + std::log((asum + dsum + 1.0) / std::abs(eq.d()[eq.n_delays()]))
                         : 2.0 + std::log(asum + 1.0);

  for (std::size_t i = 0; i < acc.zeros.size(); ++i) {
    const Complex z = acc.zeros[i];
    bool mult = std::abs(char_function_deriv(eq, z)) <= 1e-8;
    for (std::size_t j = 0; j + 1 <= i; ++j)
      if (std::abs(z - acc.zeros[j]) <= 1e-6) mult = true;
    spec.zeros.push_back(z);
    spec.residuals.push_back(std::abs(char_function(eq, z)));
    spec.multiple_flag.push_back(mult);
  }
  return spec;
}

double mode_check(const DelayEquation& eq, Complex z, double t_end, long per_unit, bool strict) {
  if (strict && std::abs(char_function(eq, z)) > 1e-10)
    throw SolverError("mode_check: z is not a characteristic zero");
  const GridSpec grid{per_unit};
  const Trajectory<Complex> traj = simulate_exponential_state(eq, z, t_end, grid);
  const Complex iz = Complex(0.0, 1.0) * z;
  double dev = 0.0;
  const long i0 = grid.per_unit;  // node of t = 0
  for (Eigen::Index i = i0; i < traj.values.size(); ++i) {
    const double t = -1.0 + grid.h() * static_cast<double>(i);
    dev = std::max(dev, std::abs(traj.values[i] - std::exp(iz * t)));
  }
  return dev;
}

OrthoWitness ortho_complement_fn(const DelayEquation& eq, const RealGridFunction& q, double eps,
                                 const RealGridFunction* q_deriv) {
  if (std::abs(q.t_start()) > 1e-12 || std::abs(q.t_end() - eps) > 1e-9)
    throw ConfigError("ortho_complement_fn: q must live on [0, eps]");
  if (std::abs(q[0]) > 1e-12 || std::abs(q[q.size() - 1]) > 1e-12)
    throw ConfigError("ortho_complement_fn: q(0) = q(eps) = 0 required");
  const double h = q.step();
  const GridSpec grid{std::lround(1.0 / h)};
  if (std::abs(grid.h() - h) > 1e-12 * h)
    throw GridError("ortho_complement_fn: off-lattice step");

  const Eigen::Index m = q.intervals();
  Vector qd(m + 1);
  if (q_deriv) {
    if (!q.same_grid(*q_deriv)) throw GridError("ortho_complement_fn: derivative grid mismatch");
    qd = q_deriv->data();
  } else {
    qd[0] = (-3.0 * q[0] + 4.0 * q[1] - q[2]) / (2.0 * h);
    for (Eigen::Index i = 1; i < m; ++i) qd[i] = (q[i + 1] - q[i - 1]) / (2.0 * h);
    qd[m] = (3.0 * q[m] - 4.0 * q[m - 1] + q[m - 2]) / (2.0 * h);
  }

  const long total = grid.index_of(1.0 + eps);
  Vector f = Vector::Zero(total + 1);
  for (Eigen::Index k = 0; k <= eq.n_delays(); ++k) {
    const double a = eq.a()[k];
    const double d = (k == 0) ? 1.0 : eq.d()[k];
    const long base = grid.index_of(1.0 - eq.delays()[k]);
    for (Eigen::Index j = 0; j <= m; ++j) f[base + j] += a * q[j] + d * qd[j];
  }
  return OrthoWitness{q, RealGridFunction(0.0, 1.0 + eps, std::move(f))};
}

double integrate_against_sin(const RealGridFunction& p, double omega) {
  const double h = p.step();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.intervals(); ++i) {
    const double s0 = p.t_start() + h * static_cast<double>(i), s1 = s0 + h;
    const double slope = (p[i + 1] - p[i]) / h;
    acc += (p[i] * std::cos(omega * s0) - p[i + 1] * std::cos(omega * s1)) / omega +
           slope / (omega * omega) * (std::sin(omega * s1) - std::sin(omega * s0));
  }
  return acc;
}

double integrate_against_cos(const RealGridFunction& p, double omega) {
  const double h = p.step();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.intervals(); ++i) {
    const double s0 = p.t_start() + h * static_cast<double>(i), s1 = s0 + h;
    const double slope = (p[i + 1] - p[i]) / h;
    acc += (p[i + 1] * std::sin(omega * s1) - p[i] * std::sin(omega * s0)) / omega +
           slope / (omega * omega) * (std::cos(omega * s1) - std::cos(omega * s0));
  }
  return acc;
}

namespace {
constexpr int kWitnessModes = 8;

/// piece_k(s) = u(eps + r_k - s) on [0, eps]: the reversed segment of the
/// control covering [r_k, r_k + eps].
std::vector<RealGridFunction> reversed_pieces(const DelayEquation& eq,
                                              const ControlSignal& control, double eps) {
  std::vector<RealGridFunction> pieces;
  for (Eigen::Index k = 0; k <= eq.n_delays(); ++k) {
    const double start = (k == 0) ? 0.0 : eq.delays()[k];
    const RealGridFunction* seg = nullptr;
    for (const auto& s : control.segments())
      if (std::abs(s.values.t_start() - start) < 1e-9 &&
          std::abs(s.values.t_end() - start - eps) < 1e-9)
        seg = &s.values;
    if (!seg) throw SolverError("orthogonality_report: control lacks the [r_k, r_k+eps] segment");
    Vector rev(seg->size());
    for (Eigen::Index i = 0; i < seg->size(); ++i) rev[i] = (*seg)[seg->size() - 1 - i];
    pieces.emplace_back(0.0, eps, std::move(rev));
  }
  return pieces;
}
}  // namespace

OrthoReport orthogonality_report(const DelayEquation& eq, const ControlSignal& control,
                                 int num_witnesses, unsigned long long seed) {
  const double eps = control.epsilon();
  const std::vector<RealGridFunction> pieces = reversed_pieces(eq, control, eps);
  const double vnorm = std::sqrt(control.energy());

  // Filon-type moments of each piece against sin / cos(m pi s / eps)
  Matrix piece_sin(pieces.size(), kWitnessModes), piece_cos(pieces.size(), kWitnessModes);
  for (std::size_t k = 0; k < pieces.size(); ++k)
    for (int mo = 1; mo <= kWitnessModes; ++mo) {
      const double omega = M_PI * mo / eps;
      piece_sin(k, mo - 1) = integrate_against_sin(pieces[k], omega);
      piece_cos(k, mo - 1) = integrate_against_cos(pieces[k], omega);
    }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  OrthoReport report;
  report.witnesses = num_witnesses;
  report.seed = seed;

  const int fine = 4096;
  for (int w = 0; w < num_witnesses; ++w) {
    Vector alpha(kWitnessModes);
    for (int mo = 0; mo < kWitnessModes; ++mo) alpha[mo] = gauss(rng);

    double inner = 0.0;
    double fnorm_sq = 0.0;
    for (Eigen::Index k = 0; k <= eq.n_delays(); ++k) {
      const double ak = eq.a()[k];
      const double dk = (k == 0) ? 1.0 : eq.d()[k];
      for (int mo = 1; mo <= kWitnessModes; ++mo) {
        const double omega = M_PI * mo / eps;
        inner += alpha[mo - 1] *
                 (ak * piece_sin(k, mo - 1) + dk * omega * piece_cos(k, mo - 1));
      }
      // ||f||^2 contribution of this slot, sampled finely (f is analytic)
      double sq = 0.0;
      for (int i = 0; i <= fine; ++i) {
        const double s = eps * static_cast<double>(i) / fine;
        double val = 0.0;
        for (int mo = 1; mo <= kWitnessModes; ++mo) {
          const double omega = M_PI * mo / eps;
          val += alpha[mo - 1] * (ak * std::sin(omega * s) + dk * omega * std::cos(omega * s));
        }
        sq += (i == 0 || i == fine) ? 0.5 * val * val : val * val;
      }
      fnorm_sq += sq * (eps / fine);
    }
    const double fnorm = std::sqrt(fnorm_sq);
    const double denom = vnorm * fnorm;
    report.products.push_back(denom > 0.0 ? std::abs(inner) / denom : 0.0);
  }
  for (double p : report.products)
    report.max_normalized_product = std::max(report.max_normalized_product, p);
  return report;
}

OrthoReport verify_characteristic_membership(const DelayEquation& eq, const InitialState& state,
                                             double eps, int num_witnesses,
                                             unsigned long long seed, const GridSpec& grid) {
  OptimalSolution sol = eq.is_simplest() ? optimal_simplest(eq.a()[1], state, eps, grid)
                        : eq.is_retarded() ? optimal_retarded(eq, state, eps, grid)
                                           : optimal_neutral(eq, state, eps, grid);
  return orthogonality_report(eq, sol.control, num_witnesses, seed);
}

bool spectral_controllability(const RetardedSystem& sys, const std::vector<Complex>& probe_zeros) {
  const Eigen::Index n = sys.dim();
  const Matrix ctrb = RetardedSystem::controllability_matrix(sys.A(), sys.b());
  Eigen::JacobiSVD<Matrix> svd(ctrb);
  const double smax = svd.singularValues()[0];
  if (smax <= 0.0 || svd.singularValues()[n - 1] < 1e-10 * smax) return false;

  for (Complex z : probe_zeros) {
    Eigen::MatrixXcd m(n, n + 1);
    const Complex iz = Complex(0.0, 1.0) * z;
    m.leftCols(n) = (iz * std::exp(iz)) * Eigen::MatrixXcd::Identity(n, n) -
                    sys.A().cast<Complex>();
    m.col(n) = sys.b().cast<Complex>();
    Eigen::JacobiSVD<Eigen::MatrixXcd> msvd(m);
    const auto& sv = msvd.singularValues();
    if (sv[0] <= 0.0 || sv[n - 1] < 1e-10 * sv[0]) return false;
  }
  return true;
}

CompanionTransform to_companion(const RetardedSystem& sys) {
  const Eigen::Index n = sys.dim();
  // Faddeev-LeVerrier: char poly lambda^n + alpha_1 lambda^{n-1} + ... + alpha_n
  Vector alpha(n);
  Matrix mk = Matrix::Identity(n, n);
  for (Eigen::Index k = 1; k <= n; ++k) {
    const Matrix am = sys.A() * mk;
    alpha[k - 1] = -am.trace() / static_cast<double>(k);
    mk = am + alpha[k - 1] * Matrix::Identity(n, n);
  }

  RetardedSystem target = RetardedSystem::companion(alpha);
  const Matrix c_src = RetardedSystem::controllability_matrix(sys.A(), sys.b());
  const Matrix c_dst = RetardedSystem::controllability_matrix(target.A(), target.b());
  Eigen::PartialPivLU<Matrix> lu(c_src.transpose());
  const Matrix g = lu.solve(c_dst.transpose()).transpose();  // G = C_dst C_src^{-1}

  const Matrix check = g * sys.A() * g.partialPivLu().solve(Matrix::Identity(n, n));
  if ((check - target.A()).cwiseAbs().maxCoeff() > 1e-6 * (1.0 + target.A().cwiseAbs().maxCoeff()))
    throw SolverError("to_companion: transform consistency check failed");
  return CompanionTransform{std::move(target), g};
}

Complex char_root_for_eigenvalue(Complex lambda) {
  if (std::abs(lambda) == 0.0) return Complex(0.0, 0.0);
  // w e^w = lambda, z = -i w
  Complex w = (std::abs(lambda) < 1.0) ? lambda : std::log(lambda);
  for (int it = 0; it < 100; ++it) {
    const Complex f = w * std::exp(w) - lambda;
    const Complex fp = (1.0 + w) * std::exp(w);
    const Complex step = f / fp;
    w -= step;
    if (std::abs(step) < 1e-15 * (1.0 + std::abs(w))) break;
  }
  return Complex(0.0, -1.0) * w;
}

}  // namespace delayctrl
