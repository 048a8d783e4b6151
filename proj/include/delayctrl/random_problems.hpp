#pragma once

#include <random>

#include "delayctrl/equation.hpp"

namespace delayctrl {

/// Randomized desk-scale problems on the 0.05 lattice (so every grid with
/// h <= 1e-3 is commensurate).  Histories are polynomials, which keeps an
/// exact derivative channel available for neutral states.
struct RandomScalarProblem {
  DelayEquation eq;
  Polynomial x0;
  double y;
  double eps;

  InitialState state(const GridSpec& grid) const;
};

struct RandomSystemProblem {
  RetardedSystem sys;
  std::vector<Polynomial> x0;
  Vector y;
  double eps;

  SystemInitialState state(const GridSpec& grid) const;
};

RandomScalarProblem random_scalar_problem(std::mt19937_64& rng, bool neutral);
RandomSystemProblem random_system_problem(std::mt19937_64& rng, int dim);

}  // namespace delayctrl
