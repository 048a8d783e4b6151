#pragma once

#include <optional>
#include <vector>

#include "delayctrl/grid_function.hpp"
#include "delayctrl/types.hpp"

namespace delayctrl {

/// Scalar delay equation
///   x'(t) + sum_k d_k x'(t - r_k) = sum_k a_k x(t - r_k) + u(t),
/// delays 0 = r_0 < r_1 < ... < r_N = 1.  d is stored aligned with the
/// delays (d[0] is unused and kept zero).
class DelayEquation {
 public:
  DelayEquation(Vector delays, Vector a_coeffs, Vector d_coeffs);

  /// N = 1, a_0 = 0, retarded:  x'(t) = a1 x(t-1) + u(t).
  static DelayEquation simplest(double a1);

  Eigen::Index n_delays() const { return delays_.size() - 1; }  // N
  const Vector& delays() const { return delays_; }
  const Vector& a() const { return a_; }
  const Vector& d() const { return d_; }
  double a0() const { return a_[0]; }

  bool is_retarded() const { return d_.isZero(0.0); }
  bool is_neutral() const { return d_[d_.size() - 1] != 0.0; }
  bool is_simplest() const {
    return n_delays() == 1 && a_[0] == 0.0 && is_retarded();
  }

  double min_gap() const {
    double g = delays_[1] - delays_[0];
    for (Eigen::Index k = 2; k < delays_.size(); ++k)
      g = std::min(g, delays_[k] - delays_[k - 1]);
    return g;
  }

 private:
  Vector delays_, a_, d_;
};

/// Vector retarded system x'(t) = A x(t-1) + b u(t).  Construction rejects
/// pairs (A, b) whose controllability matrix is rank deficient.
class RetardedSystem {
 public:
  RetardedSystem(Matrix A, Vector b);

  /// Companion pair with first row -g_1 ... -g_n and b = e_1.
  static RetardedSystem companion(const Vector& g);

  Eigen::Index dim() const { return A_.rows(); }
  const Matrix& A() const { return A_; }
  const Vector& b() const { return b_; }
  bool has_companion_form() const { return companion_g_.has_value(); }
  const Vector& companion_g() const {
    if (!companion_g_) throw SolverError("RetardedSystem: not in companion form");
    return *companion_g_;
  }

  static Matrix controllability_matrix(const Matrix& A, const Vector& b);

 private:
  Matrix A_;
  Vector b_;
  std::optional<Vector> companion_g_;
};

/// Initial state (y, x0) on [-1, 0]; x0_deriv required for neutral problems.
struct InitialState {
  double y = 0.0;
  RealGridFunction x0;
  std::optional<RealGridFunction> x0_deriv;
};

/// Vector initial state for retarded systems: y in R^n plus one history
/// component per coordinate.
struct SystemInitialState {
  Vector y;
  std::vector<RealGridFunction> x0;
};

/// Neutral equations require x0_deriv and the compatibility y = x0(0);
/// retarded equations accept any square-integrable pair.
const InitialState& validate_state(const DelayEquation& eq, const InitialState& state);

/// Uniform grid lattice: h = 1 / per_unit, chosen so that all delays, the
/// horizon tail and epsilon land exactly on nodes.
struct GridSpec {
  long per_unit;

  double h() const { return 1.0 / static_cast<double>(per_unit); }
  long index_of(double t) const {
    const double x = t * static_cast<double>(per_unit);
    const long i = std::lround(x);
    if (std::abs(x - static_cast<double>(i)) > 1e-6)
      throw GridError("GridSpec: off-lattice point t=" + std::to_string(t));
    return i;
  }
  bool on_lattice(double t) const {
    const double x = t * static_cast<double>(per_unit);
    return std::abs(x - std::round(x)) <= 1e-6;
  }

  /// Smallest refinement of target_h making {r_k} and epsilon commensurate
  /// with the lattice.  Throws GridError when the data are incommensurate.
  static GridSpec build(const std::vector<double>& breakpoints, double epsilon, double target_h);
  static GridSpec for_equation(const DelayEquation& eq, double epsilon, double target_h);
  static GridSpec for_system(double epsilon, double target_h);
};

/// Sample an analytic history onto [-1, 0] for a grid spec.
InitialState make_state(const GridSpec& grid, double y, const std::function<double(double)>& x0,
                        const std::function<double(double)>* x0_deriv = nullptr);
InitialState make_poly_state(const GridSpec& grid, double y, const Polynomial& x0, bool with_deriv);

}  // namespace delayctrl
