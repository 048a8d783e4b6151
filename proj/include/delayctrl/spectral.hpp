#pragma once

#include "delayctrl/control.hpp"
#include "delayctrl/equation.hpp"

namespace delayctrl {

/// Rectangle in the complex plane.
struct Window {
  double re0, re1, im0, im1;
};

/// Characteristic quasipolynomial
///   D(z) = iz e^{iz} + sum_k d_k iz e^{i(1-r_k)z} - sum_k a_k e^{i(1-r_k)z}.
Complex char_function(const DelayEquation& eq, Complex z);
Complex char_function_deriv(const DelayEquation& eq, Complex z);

struct Spectrum {
  std::vector<Complex> zeros;        // sorted by modulus
  std::vector<double> residuals;     // |D(z_k)|
  std::vector<bool> multiple_flag;   // |D'(z_k)| below threshold
  bool neutral = false;
  double strip_bound = 0.0;  // neutral: |Im z| <= S; retarded: Im z >= -S
};

/// Contour integral (2 pi i)^{-1} oint D'/D over the rectangle, adaptively
/// refined until the value sits within 1e-3 of an integer.
long winding_number(const DelayEquation& eq, const Window& w);

/// Argument-principle driven search: subdivision until each cell holds one
/// zero, Newton refinement, residual and multiplicity reporting.
Spectrum find_zeros(const DelayEquation& eq, Window window);

Window default_window(const DelayEquation& eq);

/// Simulates from the exponential state (1, e^{izt}) with u = 0 and returns
/// the max node deviation from e^{izt} on [0, t_end].  With strict = true a
/// non-zero of D is rejected.
double mode_check(const DelayEquation& eq, Complex z, double t_end = 1.5, long per_unit = 20000,
                  bool strict = true);

/// Witness pair: seed q in W^{1,2}(0, eps) with q(0) = q(eps) = 0 and the
/// induced element f of the orthogonal complement of the characteristic
/// space on [0, 1+eps].
struct OrthoWitness {
  RealGridFunction q;
  RealGridFunction f;
};

/// f = a_k q(t-1+r_k) + d_k q'(t-1+r_k) on [1-r_k, 1-r_k+eps], zero on the
/// gaps (the k = 0 slot carries a_0 q + q').  q' defaults to centered
/// differences; pass the analytic derivative when it is known.
OrthoWitness ortho_complement_fn(const DelayEquation& eq, const RealGridFunction& q, double eps,
                                 const RealGridFunction* q_deriv = nullptr);

struct OrthoReport {
  double max_normalized_product = 0.0;
  int witnesses = 0;
  unsigned long long seed = 0;
  std::vector<double> products;
};

/// Normalized inner products of u(T - t) against random sine-seeded
/// orthogonal-complement witnesses; oscillation-exact quadrature.
OrthoReport orthogonality_report(const DelayEquation& eq, const ControlSignal& control,
                                 int num_witnesses, unsigned long long seed);

/// Computes the minimum-energy control for the state and reports the witness
/// products; small values certify membership of u(T-t) in the characteristic
/// space.
OrthoReport verify_characteristic_membership(const DelayEquation& eq, const InitialState& state,
                                             double eps, int num_witnesses,
                                             unsigned long long seed, const GridSpec& grid);

/// rank(b, Ab, ..., A^{n-1}b) = n, plus a singular-value rank test of
/// [iz e^{iz} I - A | b] at every probe zero.
bool spectral_controllability(const RetardedSystem& sys, const std::vector<Complex>& probe_zeros);

struct CompanionTransform {
  RetardedSystem system;
  Matrix G;
};

/// Similarity transform G A G^{-1} to companion form with G b = e_1, built
/// from the controllability matrix and the characteristic polynomial.
CompanionTransform to_companion(const RetardedSystem& sys);

/// Solves iz e^{iz} = lambda (Newton); yields probe zeros of the system's
/// characteristic matrix from eigenvalues of A.
Complex char_root_for_eigenvalue(Complex lambda);

/// exact integrals of piecewise-linear samples against sin / cos(omega s)
double integrate_against_sin(const RealGridFunction& p, double omega);
double integrate_against_cos(const RealGridFunction& p, double omega);

}  // namespace delayctrl
