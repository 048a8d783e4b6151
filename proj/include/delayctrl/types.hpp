#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace delayctrl {

#define DELAYCTRL_VERSION "0.1.0"

using Complex = std::complex<double>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ComplexVector = Eigen::VectorXcd;

// Error taxonomy.  The CLI maps these onto exit codes: configuration /
// validation problems exit 2, solver-level failures exit 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GridError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingDerivative : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct CompatibilityViolation : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct MomentViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct HorizonExceeded : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct MultipleRootUnsupported : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateMomentSystem : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// sinh(a*x)/a, continued analytically through a = 0.
inline double sinhc(double a, double x) {
  const double ax = a * x;
  if (std::abs(ax) < 1e-6) {
    // sinh(ax)/a = x (1 + (ax)^2/6 + (ax)^4/120)
    const double s = ax * ax;
    return x * (1.0 + s / 6.0 + s * s / 120.0);
  }
  return std::sinh(ax) / a;
}

/// Best rational approximation p/q of x with q <= qmax (continued fractions).
/// Used to place delays and epsilon exactly on a uniform grid.
inline bool rationalize(double x, long qmax, long& p, long& q, double tol = 1e-9) {
  if (!(std::abs(x) < 1e9)) return false;
  long p0 = 1, q0 = 0;  // convergent h_{-1}
  long p1 = static_cast<long>(std::floor(x)), q1 = 1;
  double frac = x - std::floor(x);
  for (int it = 0; it < 64; ++it) {
    if (std::abs(static_cast<double>(p1) / q1 - x) < tol) {
      p = p1;
      q = q1;
      return true;
    }
    if (frac < 1e-15) break;
    const double inv = 1.0 / frac;
    const long a = static_cast<long>(std::floor(inv));
    frac = inv - std::floor(inv);
    const long p2 = a * p1 + p0, q2 = a * q1 + q0;
    if (q2 > qmax) break;
    p0 = p1; q0 = q1; p1 = p2; q1 = q2;
  }
  if (std::abs(static_cast<double>(p1) / q1 - x) < tol) {
    p = p1;
    q = q1;
    return true;
  }
  return false;
}

/// Polynomial with real coefficients c0 + c1 t + c2 t^2 + ...; handy for
/// analytic initial histories whose derivative is known exactly.
struct Polynomial {
  Vector coeffs;

  double operator()(double t) const {
    double v = 0.0;
    for (Eigen::Index j = coeffs.size() - 1; j >= 0; --j) v = v * t + coeffs[j];
    return v;
  }
  Polynomial derivative() const {
    if (coeffs.size() <= 1) return Polynomial{Vector::Zero(1)};
    Vector d(coeffs.size() - 1);
    for (Eigen::Index j = 1; j < coeffs.size(); ++j) d[j - 1] = j * coeffs[j];
    return Polynomial{d};
  }
};

}  // namespace delayctrl
