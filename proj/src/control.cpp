#include "delayctrl/control.hpp"

namespace delayctrl {

std::string to_string(SegmentLabel label, int index) {
  switch (label) {
    case SegmentLabel::generator: return "generator";
    case SegmentLabel::psi: return "psi_" + std::to_string(index);
    case SegmentLabel::phi: return "phi_" + std::to_string(index);
    case SegmentLabel::feedback: return "feedback";
  }
  return "?";
}

ControlSignal::ControlSignal(double horizon, double epsilon, RealGridFunction generator,
                             std::vector<ControlSegment> segments)
    : horizon_(horizon), epsilon_(epsilon), generator_(std::move(generator)),
      segments_(std::move(segments)) {
  if (segments_.empty()) throw ConfigError("ControlSignal: no segments");
  double cursor = 0.0;
  for (const auto& seg : segments_) {
    if (std::abs(seg.values.t_start() - cursor) > 1e-9)
      throw ConfigError("ControlSignal: segments must cover [0, T] without gaps");
    cursor = seg.values.t_end();
  }
  if (std::abs(cursor - horizon_) > 1e-9)
    throw ConfigError("ControlSignal: segments do not reach the horizon");
}

ControlSignal ControlSignal::zero(double horizon, double epsilon, const GridSpec& grid) {
  std::vector<ControlSegment> segs;
  segs.push_back({RealGridFunction::zero(0.0, horizon, grid.index_of(horizon)),
                  SegmentLabel::generator, 0});
  return ControlSignal(horizon, epsilon,
                       RealGridFunction::zero(0.0, epsilon, grid.index_of(epsilon)),
                       std::move(segs));
}

double ControlSignal::evaluate(double t) const {
  if (t < 0.0 || t > horizon_ + 1e-12) throw HorizonExceeded("ControlSignal: t outside [0, T]");
  for (std::size_t s = 0; s < segments_.size(); ++s) {
    const auto& f = segments_[s].values;
    const bool last = s + 1 == segments_.size();
    if (t < f.t_end() - 1e-12 || (last && t <= f.t_end() + 1e-12)) {
      const double x = std::clamp((t - f.t_start()) / f.step(),
                                  0.0, static_cast<double>(f.intervals()));
      const auto i = std::min<Eigen::Index>(static_cast<Eigen::Index>(x), f.intervals() - 1);
      const double frac = x - static_cast<double>(i);
      return (1.0 - frac) * f[i] + frac * f[i + 1];
    }
  }
  return segments_.back().values[segments_.back().values.intervals()];
}

double ControlSignal::energy() const {
  double acc = 0.0;
  for (const auto& seg : segments_) {
    const auto& f = seg.values;
    const double h = f.step();
    double s = 0.5 * (f[0] * f[0] + f[f.size() - 1] * f[f.size() - 1]);
    for (Eigen::Index i = 1; i < f.size() - 1; ++i) s += f[i] * f[i];
    acc += s * h;
  }
  return acc;
}

void ControlSignal::sample_limits(const GridSpec& grid, double t_end, Vector& left,
                                  Vector& right) const {
  if (t_end > horizon_ + 1e-12) throw HorizonExceeded("ControlSignal: t_end exceeds horizon");
  const long n = grid.index_of(t_end);
  left = Vector::Zero(n + 1);
  right = Vector::Zero(n + 1);
  for (const auto& seg : segments_) {
    const auto& f = seg.values;
    if (std::abs(f.step() - grid.h()) > 1e-12 * grid.h())
      throw GridError("ControlSignal: segment grid does not match the lattice");
    const long i0 = grid.index_of(f.t_start());
    for (Eigen::Index j = 0; j < f.size(); ++j) {
      const long i = i0 + j;
      if (i > n) break;
      if (j > 0) left[i] = f[j];
      if (j < f.size() - 1 || i == n) right[i] = f[j];
    }
  }
  // the first segment owns the left limit at 0
  left[0] = right[0];
  // interior nodes of each segment have equal limits already; at breakpoints
  // left comes from the earlier segment, right from the later one.
}

ControlSignal ControlSignal::split_at(double t) const {
  std::vector<ControlSegment> out;
  for (const auto& seg : segments_) {
    const auto& f = seg.values;
    if (t > f.t_start() + 1e-12 && t < f.t_end() - 1e-12) {
      out.push_back({f.restrict_to(f.t_start(), t), seg.label, seg.index});
      out.push_back({f.restrict_to(t, f.t_end()), seg.label, seg.index});
    } else {
      out.push_back(seg);
    }
  }
  return ControlSignal(horizon_, epsilon_, generator_, std::move(out));
}

}  // namespace delayctrl
