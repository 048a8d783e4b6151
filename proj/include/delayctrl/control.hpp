#pragma once

#include <string>
#include <vector>

#include "delayctrl/equation.hpp"
#include "delayctrl/grid_function.hpp"

namespace delayctrl {

enum class SegmentLabel { generator, psi, phi, feedback };

std::string to_string(SegmentLabel label, int index);

struct ControlSegment {
  RealGridFunction values;  // includes both endpoint samples
  SegmentLabel label = SegmentLabel::feedback;
  int index = 0;  // s for psi_s / phi_s, 0 otherwise
};

/// Piecewise-assembled control on [0, T].  Segments partition [0, T] without
/// gaps; evaluation is left-closed at interior breakpoints (the value at a
/// breakpoint comes from the segment starting there).
class ControlSignal {
 public:
  ControlSignal(double horizon, double epsilon, RealGridFunction generator,
                std::vector<ControlSegment> segments);

  static ControlSignal zero(double horizon, double epsilon, const GridSpec& grid);

  double horizon() const { return horizon_; }
  double epsilon() const { return epsilon_; }
  const RealGridFunction& generator() const { return generator_; }
  const std::vector<ControlSegment>& segments() const { return segments_; }

  double evaluate(double t) const;

  /// L2(0, T)-norm squared, accumulated segment by segment.
  double energy() const;

  /// Left/right-limit samples on the global lattice nodes 0..n_nodes-1
  /// covering [0, t_end].  Jumps live exactly at segment breakpoints.
  void sample_limits(const GridSpec& grid, double t_end, Vector& left, Vector& right) const;

  /// Same control with the segment containing node t split there (t must be
  /// an interior node of one segment).
  ControlSignal split_at(double t) const;

 private:
  double horizon_, epsilon_;
  RealGridFunction generator_;
  std::vector<ControlSegment> segments_;
};

}  // namespace delayctrl
