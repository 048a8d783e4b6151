#pragma once

#include <cmath>
#include <functional>

#include "delayctrl/types.hpp"

namespace delayctrl {

/// Uniformly sampled function on [t_start, t_end] with trapezoid quadrature.
/// Immutable after construction; all operations return new values.
template <typename Scalar>
class GridFunction {
 public:
  using Storage = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  GridFunction(double t_start, double t_end, Storage samples)
      : t_start_(t_start), t_end_(t_end), samples_(std::move(samples)) {
    if (!(t_end_ > t_start_)) throw GridError("GridFunction: degenerate interval");
    if (samples_.size() < 3) throw GridError("GridFunction: need M >= 2 intervals");
  }

  static GridFunction zero(double t_start, double t_end, Eigen::Index m) {
    return GridFunction(t_start, t_end, Storage::Zero(m + 1));
  }
  static GridFunction constant(double t_start, double t_end, Eigen::Index m, Scalar v) {
    return GridFunction(t_start, t_end, Storage::Constant(m + 1, v));
  }
  static GridFunction from_fn(double t_start, double t_end, Eigen::Index m,
                              const std::function<Scalar(double)>& f) {
    Storage s(m + 1);
    const double h = (t_end - t_start) / static_cast<double>(m);
    for (Eigen::Index i = 0; i <= m; ++i) s[i] = f(t_start + h * static_cast<double>(i));
    return GridFunction(t_start, t_end, std::move(s));
  }

  double t_start() const { return t_start_; }
  double t_end() const { return t_end_; }
  Eigen::Index intervals() const { return samples_.size() - 1; }
  Eigen::Index size() const { return samples_.size(); }
  double step() const { return (t_end_ - t_start_) / static_cast<double>(intervals()); }
  double node(Eigen::Index i) const {
    return t_start_ + (t_end_ - t_start_) * static_cast<double>(i) / static_cast<double>(intervals());
  }
  const Storage& data() const { return samples_; }
  Storage& data() { return samples_; }
  Scalar operator[](Eigen::Index i) const { return samples_[i]; }

  /// Index of the node at t; throws when t is not a grid node.
  Eigen::Index index_at(double t) const {
    const double x = (t - t_start_) / step();
    const auto i = static_cast<Eigen::Index>(std::llround(x));
    if (i < 0 || i > intervals() || std::abs(x - static_cast<double>(i)) > 1e-6)
      throw GridError("GridFunction: off-grid point t=" + std::to_string(t));
    return i;
  }

  bool same_grid(const GridFunction& o) const {
    return intervals() == o.intervals() && std::abs(t_start_ - o.t_start_) < 1e-12 &&
           std::abs(t_end_ - o.t_end_) < 1e-12;
  }

  /// Trapezoid integral over the whole interval.
  Scalar integrate() const {
    const double h = step();
    Scalar acc = (samples_[0] + samples_[samples_.size() - 1]) * Scalar(0.5);
    for (Eigen::Index i = 1; i < samples_.size() - 1; ++i) acc += samples_[i];
    return acc * Scalar(h);
  }

  /// Running trapezoid integral; result shares the grid, value 0 at t_start.
  GridFunction cumulative() const {
    Storage out(samples_.size());
    const double h = step();
    out[0] = Scalar(0);
    for (Eigen::Index i = 1; i < samples_.size(); ++i)
      out[i] = out[i - 1] + (samples_[i - 1] + samples_[i]) * Scalar(0.5 * h);
    return GridFunction(t_start_, t_end_, std::move(out));
  }

  double norm_l2() const {
    const double h = step();
    double acc = 0.5 * (std::norm(samples_[0]) + std::norm(samples_[samples_.size() - 1]));
    for (Eigen::Index i = 1; i < samples_.size() - 1; ++i) acc += std::norm(samples_[i]);
    return std::sqrt(acc * h);
  }
  double max_abs() const {
    double m = 0.0;
    for (Eigen::Index i = 0; i < samples_.size(); ++i) m = std::max(m, std::abs(samples_[i]));
    return m;
  }

  /// Node-exact restriction to [a, b]; a and b must be grid nodes.
  GridFunction restrict_to(double a, double b) const {
    const Eigen::Index i0 = index_at(a), i1 = index_at(b);
    if (i1 - i0 < 2) throw GridError("GridFunction: restriction too short");
    return GridFunction(node(i0), node(i1), samples_.segment(i0, i1 - i0 + 1));
  }

  /// Same samples on a translated interval.
  GridFunction shifted(double dt) const {
    return GridFunction(t_start_ + dt, t_end_ + dt, samples_);
  }

  GridFunction operator+(const GridFunction& o) const {
    require_same(o);
    return GridFunction(t_start_, t_end_, samples_ + o.samples_);
  }
  GridFunction operator-(const GridFunction& o) const {
    require_same(o);
    return GridFunction(t_start_, t_end_, samples_ - o.samples_);
  }
  GridFunction operator*(Scalar a) const { return GridFunction(t_start_, t_end_, samples_ * a); }

 private:
  void require_same(const GridFunction& o) const {
    if (!same_grid(o)) throw GridError("GridFunction: grid mismatch");
  }

  double t_start_, t_end_;
  Storage samples_;
};

using RealGridFunction = GridFunction<double>;
using ComplexGridFunction = GridFunction<Complex>;

/// samples[i] = evaluator(t_start + i h), trapezoid weights implied.
template <typename Scalar>
GridFunction<Scalar> make_grid_function(double t_start, double t_end, Eigen::Index m,
                                        const std::function<Scalar(double)>& evaluator) {
  if (!(t_end > t_start)) throw GridError("make_grid_function: degenerate interval");
  if (m < 2) throw GridError("make_grid_function: M < 2");
  return GridFunction<Scalar>::from_fn(t_start, t_end, m, evaluator);
}

inline RealGridFunction make_grid_function(double t_start, double t_end, Eigen::Index m,
                                           const std::function<double(double)>& evaluator) {
  return make_grid_function<double>(t_start, t_end, m, evaluator);
}

/// (f*g)(t_i) = int_0^{t_i} f(t_i - tau) g(tau) dtau by trapezoid at every
/// node; direct O(M^2) evaluation.
template <typename Scalar>
GridFunction<Scalar> convolve(const GridFunction<Scalar>& f, const GridFunction<Scalar>& g) {
  if (!f.same_grid(g)) throw GridError("convolve: grid mismatch");
  const Eigen::Index n = f.size();
  const double h = f.step();
  typename GridFunction<Scalar>::Storage out(n);
  out[0] = Scalar(0);
  for (Eigen::Index i = 1; i < n; ++i) {
    Scalar acc = (f[i] * g[0] + f[0] * g[i]) * Scalar(0.5);
    for (Eigen::Index j = 1; j < i; ++j) acc += f[i - j] * g[j];
    out[i] = acc * Scalar(h);
  }
  return GridFunction<Scalar>(f.t_start(), f.t_end(), std::move(out));
}

/// Convolution of a difference kernel given by its node samples K[0..M] with
/// g: out(t_i) = int_0^{t_i} K(t_i - tau) g(tau) dtau.
template <typename Scalar>
GridFunction<Scalar> convolve_kernel(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& kernel,
                                     const GridFunction<Scalar>& g) {
  const Eigen::Index n = g.size();
  if (kernel.size() != n) throw GridError("convolve_kernel: size mismatch");
  const double h = g.step();
  typename GridFunction<Scalar>::Storage out(n);
  out[0] = Scalar(0);
  for (Eigen::Index i = 1; i < n; ++i) {
    Scalar acc = (kernel[i] * g[0] + kernel[0] * g[i]) * Scalar(0.5);
    for (Eigen::Index j = 1; j < i; ++j) acc += kernel[i - j] * g[j];
    out[i] = acc * Scalar(h);
  }
  return GridFunction<Scalar>(g.t_start(), g.t_end(), std::move(out));
}

/// L2(t_start, t_end) inner product of two real grid functions.
inline double l2_inner(const RealGridFunction& f, const RealGridFunction& g) {
  if (!f.same_grid(g)) throw GridError("l2_inner: grid mismatch");
  const double h = f.step();
  double acc = 0.5 * (f[0] * g[0] + f[f.size() - 1] * g[g.size() - 1]);
  for (Eigen::Index i = 1; i < f.size() - 1; ++i) acc += f[i] * g[i];
  return acc * h;
}

/// Trapezoid weights of the grid (h/2 at the ends, h inside).
inline Vector trapezoid_weights(Eigen::Index nodes, double h) {
  Vector w = Vector::Constant(nodes, h);
  w[0] = 0.5 * h;
  w[nodes - 1] = 0.5 * h;
  return w;
}

}  // namespace delayctrl
