#pragma once

#include <filesystem>
#include <variant>

#include "delayctrl/control.hpp"
#include "delayctrl/simulation.hpp"
#include "delayctrl/spectral.hpp"

#include <json.hpp>

namespace delayctrl {

/// Analytic or sampled scalar function of t, as it appears in configs:
/// {"const": v} | {"poly": [c0, c1, ...]} | {"samples": [...]}.
struct FunctionSpec {
  enum class Kind { Constant, Poly, Samples } kind = Kind::Constant;
  double value = 0.0;
  Polynomial poly;
  Vector samples;

  RealGridFunction materialize(double t0, double t1, Eigen::Index m) const;
  bool analytic() const { return kind != Kind::Samples; }
  FunctionSpec derivative() const;  // analytic kinds only
};

struct ProblemConfig {
  enum class Type { Retarded, Neutral, System } type = Type::Retarded;

  // scalar equations
  Vector delays, a, d;

  // systems: either (A, b) or companion g
  Matrix A;
  Vector b;
  Vector g;
  bool has_matrix = false;

  double y_scalar = 0.0;
  Vector y_vector;
  FunctionSpec x0;
  std::optional<FunctionSpec> x0_deriv;
  std::vector<FunctionSpec> x0_components;

  double epsilon = 0.25;
  double grid_h = 1e-3;
};

ProblemConfig parse_config(const nlohmann::json& doc);
ProblemConfig load_config(const std::filesystem::path& path);

struct ScalarProblem {
  DelayEquation eq;
  InitialState state;
  double eps;
  GridSpec grid;
};
struct SystemProblem {
  RetardedSystem sys;  // companion form (transformed if needed)
  SystemInitialState state;
  double eps;
  GridSpec grid;
};
using Problem = std::variant<ScalarProblem, SystemProblem>;

/// Builds equation/state on the lattice; systems given as (A, b) are moved
/// to companion coordinates together with their states.
Problem materialize(const ProblemConfig& config, double h_override = 0.0);

// ---- deterministic file output -------------------------------------------

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<Vector>& columns);
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory<double>& traj);
void write_trajectory_csv(const std::filesystem::path& path, const SystemTrajectory& traj);
void write_control_csv(const std::filesystem::path& path, const ControlSignal& control);
void write_grid_csv(const std::filesystem::path& path, const std::string& name,
                    const RealGridFunction& f);
void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& spec);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

// json variants of the data files (selected by --format json)
nlohmann::json trajectory_to_json(const Trajectory<double>& traj);
nlohmann::json trajectory_to_json(const SystemTrajectory& traj);
nlohmann::json control_to_json(const ControlSignal& control);
nlohmann::json grid_to_json(const std::string& name, const RealGridFunction& f);
nlohmann::json spectrum_to_json(const Spectrum& spec);

std::string format_double(double v);

}  // namespace delayctrl
