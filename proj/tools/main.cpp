#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "delayctrl/config_io.hpp"
#include "delayctrl/optimal.hpp"
#include "delayctrl/oracle.hpp"
#include "delayctrl/random_problems.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace delayctrl;

namespace {

struct RunContext {
  std::string command;
  fs::path config_path;
  fs::path out_dir;
  double h_override = 0.0;
  unsigned long long seed = 1;
  std::string format = "csv";
  json raw_config;
  std::vector<std::string> outputs;
};

json manifest_skeleton(const RunContext& ctx) {
  json m;
  m["version"] = DELAYCTRL_VERSION;
  m["command"] = ctx.command;
  m["config_path"] = ctx.config_path.string();
  m["config"] = ctx.raw_config;
  m["h"] = ctx.h_override;
  m["seed"] = ctx.seed;
  m["format"] = ctx.format;
  return m;
}

void finish_manifest(const RunContext& ctx, json m, const json& report) {
  m["outputs"] = ctx.outputs;
  m["report"] = report;
  write_json(ctx.out_dir / "manifest.json", m);
}

json load_raw(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config error: cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config error: ") + e.what());
  }
  return doc;
}

void emit_data(RunContext& ctx, const std::string& base,
               const std::function<void(const fs::path&)>& csv_writer,
               const std::function<nlohmann::json()>& json_maker) {
  if (ctx.format == "json") {
    write_json(ctx.out_dir / (base + ".json"), json_maker());
    ctx.outputs.push_back(base + ".json");
  } else {
    csv_writer(ctx.out_dir / (base + ".csv"));
    ctx.outputs.push_back(base + ".csv");
  }
}

double horizon_of(const Problem& problem) {
  if (std::holds_alternative<ScalarProblem>(problem))
    return 1.0 + std::get<ScalarProblem>(problem).eps;
  const auto& sp = std::get<SystemProblem>(problem);
  return static_cast<double>(sp.sys.dim()) + sp.eps;
}

OptimalSolution solve_scalar(const ScalarProblem& p) {
  if (p.eq.is_simplest()) return optimal_simplest(p.eq.a()[1], p.state, p.eps, p.grid);
  if (p.eq.is_retarded()) return optimal_retarded(p.eq, p.state, p.eps, p.grid);
  return optimal_neutral(p.eq, p.state, p.eps, p.grid);
}

/// Reads a control back from its CSV form (columns t,u).  A repeated t row
/// marks a segment boundary: the first value closes the left segment, the
/// second opens the right one, so jumps survive the round trip.
ControlSignal control_from_csv(const fs::path& path, double horizon, double eps,
                               const GridSpec& grid) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config error: cannot open control file " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::pair<long, double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    if (c1 == std::string::npos) throw ConfigError("control file: need columns t,u");
    const auto c2 = line.find(',', c1 + 1);
    const double t = std::stod(line.substr(0, c1));
    const double u = std::stod(line.substr(c1 + 1, c2 == std::string::npos ? std::string::npos
                                                                            : c2 - c1 - 1));
    const long idx = grid.index_of(t);
    if (idx >= 0 && idx <= grid.index_of(horizon)) rows.emplace_back(idx, u);
  }
  if (rows.empty()) throw ConfigError("control file: no samples");
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  if (rows.front().first != 0)
    throw ConfigError("control file: samples must start at t = 0");

  std::vector<ControlSegment> segs;
  std::vector<double> current{rows.front().second};
  long seg_start = rows.front().first;
  long prev = rows.front().first;
  auto close_segment = [&](long end_idx) {
    Vector vals = Eigen::Map<const Vector>(current.data(), current.size());
    segs.push_back({RealGridFunction(grid.h() * seg_start, grid.h() * end_idx, vals),
                    SegmentLabel::generator, 0});
  };
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto [idx, val] = rows[i];
    if (idx == prev) {  // duplicate node: a jump between segments
      close_segment(prev);
      seg_start = idx;
      current.assign(1, val);
    } else if (idx == prev + 1) {
      current.push_back(val);
    } else {
      throw ConfigError("control file: samples do not cover [0, T] on the lattice");
    }
    prev = idx;
  }
  if (prev != grid.index_of(horizon))
    throw ConfigError("control file: samples do not cover [0, T] on the lattice");
  close_segment(prev);
  const long m_eps = grid.index_of(eps);
  Vector gen(m_eps + 1);
  ControlSignal whole(horizon, eps, RealGridFunction::zero(0.0, eps, m_eps), segs);
  Vector ul, ur;
  whole.sample_limits(grid, eps, ul, ur);
  for (long i = 0; i <= m_eps; ++i) gen[i] = (i == m_eps) ? ul[i] : ur[i];
  return ControlSignal(horizon, eps, RealGridFunction(0.0, eps, gen), std::move(segs));
}

int cmd_simulate(RunContext& ctx, const std::string& u_source, double t_end_arg) {
  const Problem problem = materialize(parse_config(ctx.raw_config), ctx.h_override);
  const double horizon = horizon_of(problem);
  const double t_end = t_end_arg > 0.0 ? t_end_arg : horizon;
  json report;

  if (std::holds_alternative<ScalarProblem>(problem)) {
    const auto& p = std::get<ScalarProblem>(problem);
    ControlSignal u = ControlSignal::zero(horizon, p.eps, p.grid);
    if (u_source == "optimal") {
      u = solve_scalar(p).control;
    } else if (u_source != "zero") {
      u = control_from_csv(u_source, horizon, p.eps, p.grid);
    }
    const Trajectory<double> traj = simulate(p.eq, p.state, u, t_end, p.grid);
    emit_data(ctx, "trajectory",
              [&](const fs::path& f) { write_trajectory_csv(f, traj); },
              [&] { return trajectory_to_json(traj); });
    if (t_end >= horizon - 1e-12) report["null_residual"] = null_residual(traj, horizon);
  } else {
    const auto& p = std::get<SystemProblem>(problem);
    ControlSignal u = ControlSignal::zero(horizon, p.eps, p.grid);
    if (u_source == "optimal") {
      u = optimal_system(p.sys, p.state, p.eps, p.grid).control;
    } else if (u_source != "zero") {
      u = control_from_csv(u_source, horizon, p.eps, p.grid);
    }
    const SystemTrajectory traj = simulate_system(p.sys, p.state, u, t_end, p.grid);
    emit_data(ctx, "trajectory",
              [&](const fs::path& f) { write_trajectory_csv(f, traj); },
              [&] { return trajectory_to_json(traj); });
    if (t_end >= horizon - 1e-12) report["null_residual"] = null_residual(traj, horizon);
  }
  report["t_end"] = t_end;
  finish_manifest(ctx, manifest_skeleton(ctx), report);
  return 0;
}

int cmd_optimal(RunContext& ctx) {
  const Problem problem = materialize(parse_config(ctx.raw_config), ctx.h_override);
  json report;
  if (std::holds_alternative<ScalarProblem>(problem)) {
    const auto& p = std::get<ScalarProblem>(problem);
    const OptimalSolution sol = solve_scalar(p);
    emit_data(ctx, "u_hat",
              [&](const fs::path& f) { write_control_csv(f, sol.control); },
              [&] { return control_to_json(sol.control); });
    emit_data(ctx, "u0_hat",
              [&](const fs::path& f) { write_grid_csv(f, "u_hat", sol.generator); },
              [&] { return grid_to_json("u_hat", sol.generator); });
    report["energy"] = sol.energy;
    report["constants"] = std::vector<double>(sol.constants.data(),
                                              sol.constants.data() + sol.constants.size());
    const MomentConstraints mc = moment_constraints(p.eq, p.state, p.eps, p.grid);
    report["moment_residual"] = mc.residual(sol.generator).cwiseAbs().maxCoeff();
    const Trajectory<double> traj = simulate(p.eq, p.state, sol.control, 1.0 + p.eps, p.grid);
    report["null_residual"] = null_residual(traj, 1.0 + p.eps);
  } else {
    const auto& p = std::get<SystemProblem>(problem);
    const OptimalSolution sol = optimal_system(p.sys, p.state, p.eps, p.grid);
    emit_data(ctx, "u_hat",
              [&](const fs::path& f) { write_control_csv(f, sol.control); },
              [&] { return control_to_json(sol.control); });
    emit_data(ctx, "u0_hat",
              [&](const fs::path& f) { write_grid_csv(f, "u_hat", sol.generator); },
              [&] { return grid_to_json("u_hat", sol.generator); });
    report["energy"] = sol.energy;
    report["constants"] = std::vector<double>(sol.constants.data(),
                                              sol.constants.data() + sol.constants.size());
    const MomentConstraints mc = system_moment_constraints(p.sys, p.state, p.eps, p.grid);
    report["moment_residual"] = mc.residual(sol.generator).cwiseAbs().maxCoeff();
    const double horizon = static_cast<double>(p.sys.dim()) + p.eps;
    const SystemTrajectory traj = simulate_system(p.sys, p.state, sol.control, horizon, p.grid);
    report["null_residual"] = null_residual(traj, horizon);
  }
  write_json(ctx.out_dir / "summary.json", report);
  ctx.outputs.push_back("summary.json");
  finish_manifest(ctx, manifest_skeleton(ctx), report);
  return 0;
}

int cmd_spectrum(RunContext& ctx, const std::string& window_arg) {
  const ProblemConfig cfg = parse_config(ctx.raw_config);
  if (cfg.type == ProblemConfig::Type::System)
    throw ConfigError("config error: spectrum works on scalar equations");
  DelayEquation eq(cfg.delays, cfg.a, cfg.d);

  Window w = default_window(eq);
  if (!window_arg.empty()) {
    std::array<double, 4> vals{};
    std::size_t pos = 0;
    std::string s = window_arg;
    for (int i = 0; i < 4; ++i) {
      const auto comma = s.find(',', pos);
      vals[i] = std::stod(s.substr(pos, comma - pos));
      pos = (comma == std::string::npos) ? s.size() : comma + 1;
    }
    w = Window{vals[0], vals[1], vals[2], vals[3]};
  }

  const Spectrum spec = find_zeros(eq, w);
  emit_data(ctx, "spectrum",
            [&](const fs::path& f) { write_spectrum_csv(f, spec); },
            [&] { return spectrum_to_json(spec); });

  json report;
  report["zeros_found"] = spec.zeros.size();
  report["localization"] = spec.neutral
                               ? "horizontal strip |Im z| <= " + format_double(spec.strip_bound)
                               : "half-plane Im z >= " + format_double(-spec.strip_bound);
  double worst = 0.0;
  for (double r : spec.residuals) worst = std::max(worst, r);
  report["max_residual"] = worst;
  finish_manifest(ctx, manifest_skeleton(ctx), report);
  return 0;
}

int cmd_oracle(RunContext& ctx) {
  const Problem problem = materialize(parse_config(ctx.raw_config), ctx.h_override);
  json report;
  RealGridFunction u0 = [&] {
    if (std::holds_alternative<ScalarProblem>(problem)) {
      const auto& p = std::get<ScalarProblem>(problem);
      return kkt_solve(qp_from_equation(p.eq, p.state, p.eps, p.grid));
    }
    const auto& p = std::get<SystemProblem>(problem);
    return kkt_solve(qp_from_system(p.sys, p.state, p.eps, p.grid));
  }();
  emit_data(ctx, "u0_kkt",
            [&](const fs::path& f) { write_grid_csv(f, "u0", u0); },
            [&] { return grid_to_json("u0", u0); });

  if (std::holds_alternative<ScalarProblem>(problem)) {
    const auto& p = std::get<ScalarProblem>(problem);
    const MomentConstraints mc = moment_constraints(p.eq, p.state, p.eps, p.grid);
    report["constraint_residual"] = mc.residual(u0).cwiseAbs().maxCoeff();
    const OptimalSolution sol = solve_scalar(p);
    report["closed_form_distance_rel"] =
        (u0 - sol.generator).norm_l2() / std::max(1e-300, sol.generator.norm_l2());
  } else {
    const auto& p = std::get<SystemProblem>(problem);
    const MomentConstraints mc = system_moment_constraints(p.sys, p.state, p.eps, p.grid);
    report["constraint_residual"] = mc.residual(u0).cwiseAbs().maxCoeff();
    const OptimalSolution sol = optimal_system(p.sys, p.state, p.eps, p.grid);
    report["closed_form_distance_rel"] =
        (u0 - sol.generator).norm_l2() / std::max(1e-300, sol.generator.norm_l2());
  }
  write_json(ctx.out_dir / "oracle_report.json", report);
  ctx.outputs.push_back("oracle_report.json");
  finish_manifest(ctx, manifest_skeleton(ctx), report);
  return 0;
}

int cmd_verify(RunContext& ctx, std::vector<std::string> checks, const std::string& u_file) {
  if (checks.empty()) checks = {"null", "oracle", "ortho", "monotone", "optimality"};
  const Problem problem = materialize(parse_config(ctx.raw_config), ctx.h_override);
  json report;
  bool all_pass = true;

  auto emit = [&](const std::string& name, bool pass, double measured, double threshold,
                  const std::string& relation) {
    json c;
    c["pass"] = pass;
    c["measured"] = measured;
    c["threshold"] = threshold;
    c["relation"] = relation;
    report[name] = c;
    all_pass = all_pass && pass;
    std::cout << (pass ? "PASS" : "FAIL") << " " << name << ": measured " << measured << " "
              << relation << " " << threshold << "\n";
  };

  for (const std::string& check : checks) {
    if (std::holds_alternative<ScalarProblem>(problem)) {
      const auto& p = std::get<ScalarProblem>(problem);
      if (check == "null") {
        // with --u the supplied control is checked instead of the optimal one
        const ControlSignal u = u_file.empty()
                                    ? solve_scalar(p).control
                                    : control_from_csv(u_file, 1.0 + p.eps, p.eps, p.grid);
        const double res =
            null_residual(simulate(p.eq, p.state, u, 1.0 + p.eps, p.grid), 1.0 + p.eps);
        emit("null", res <= 1e-4, res, 1e-4, "<=");
      } else if (check == "oracle") {
        const OptimalSolution sol = solve_scalar(p);
        const RealGridFunction kkt = kkt_solve(qp_from_equation(p.eq, p.state, p.eps, p.grid));
        const double rel =
            (kkt - sol.generator).norm_l2() / std::max(1e-300, sol.generator.norm_l2());
        emit("oracle", rel <= 1e-3, rel, 1e-3, "<=");
      } else if (check == "ortho") {
        const double h_fine = std::min(p.grid.h(), 2.5e-4);
        const GridSpec fine = GridSpec::for_equation(p.eq, p.eps, h_fine);
        if (fine.per_unit % p.grid.per_unit != 0)
          throw GridError("verify: refinement lattice mismatch");
        const long factor = fine.per_unit / p.grid.per_unit;
        InitialState st = p.state;
        if (factor > 1) {
          // re-sample the history by linear interpolation on the finer grid
          auto refine = [&](const RealGridFunction& f) {
            Vector v(fine.per_unit + 1);
            for (long i = 0; i <= fine.per_unit; ++i) {
              const long j = i / factor;
              const double frac = static_cast<double>(i % factor) / factor;
              v[i] = (1.0 - frac) * f[j] + frac * f[std::min<long>(j + 1, f.intervals())];
            }
            return RealGridFunction(-1.0, 0.0, v);
          };
          st.x0 = refine(p.state.x0);
          if (p.state.x0_deriv) st.x0_deriv = refine(*p.state.x0_deriv);
        }
        const OrthoReport rep =
            verify_characteristic_membership(p.eq, st, p.eps, 20, ctx.seed, fine);
        emit("ortho", rep.max_normalized_product <= 1e-5, rep.max_normalized_product, 1e-5, "<=");
        report["ortho"]["max_normalized_product"] = rep.max_normalized_product;
        report["ortho"]["witnesses"] = rep.witnesses;
        report["ortho"]["seed"] = rep.seed;
      } else if (check == "monotone") {
        std::vector<double> eps_list;
        for (double e : {0.5, 0.4, 0.3, 0.2, 0.1})
          if (e < p.eq.delays()[1] && e <= p.eq.min_gap()) eps_list.push_back(e);
        const auto curve = energy_curve(p.eq, p.state, eps_list, p.grid.h());
        double margin = 1e300;
        for (std::size_t i = 0; i + 1 < curve.size(); ++i)
          margin = std::min(margin, curve[i + 1].second - curve[i].second);
        emit("monotone", margin > 1e-10, margin, 1e-10, ">");
      } else if (check == "optimality") {
        const OptimalSolution sol = solve_scalar(p);
        const MomentConstraints mc = moment_constraints(p.eq, p.state, p.eps, p.grid);
        std::mt19937_64 rng(ctx.seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        bool ok = true;
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
          Vector perturb(sol.generator.size());
          for (Eigen::Index i = 0; i < perturb.size(); ++i) perturb[i] = gauss(rng);
          const RealGridFunction cand = project_onto_constraints(
              RealGridFunction(0.0, p.eps, sol.generator.data() + perturb), mc);
          const double dist = (cand - sol.generator).norm_l2();
          const double e = assemble_control(p.eq, p.state, cand, p.grid).energy();
          if (e < sol.energy - 1e-12 * std::max(1.0, sol.energy)) ok = false;
          if (dist >= 1e-4 && e <= sol.energy) ok = false;
          worst = std::max(worst, sol.energy - e);
        }
        emit("optimality", ok, worst, 0.0, "excess<=");
      } else {
        throw ConfigError("config error: unknown check '" + check + "'");
      }
    } else {
      const auto& p = std::get<SystemProblem>(problem);
      const double horizon = static_cast<double>(p.sys.dim()) + p.eps;
      if (check == "null") {
        const ControlSignal u = u_file.empty()
                                    ? optimal_system(p.sys, p.state, p.eps, p.grid).control
                                    : control_from_csv(u_file, horizon, p.eps, p.grid);
        const double res =
            null_residual(simulate_system(p.sys, p.state, u, horizon, p.grid), horizon);
        emit("null", res <= 1e-4, res, 1e-4, "<=");
      } else if (check == "oracle") {
        const OptimalSolution sol = optimal_system(p.sys, p.state, p.eps, p.grid);
        const RealGridFunction kkt = kkt_solve(qp_from_system(p.sys, p.state, p.eps, p.grid));
        const double rel =
            (kkt - sol.generator).norm_l2() / std::max(1e-300, sol.generator.norm_l2());
        emit("oracle", rel <= 1e-3, rel, 1e-3, "<=");
      } else if (check == "monotone") {
        std::vector<double> eps_list{0.5, 0.4, 0.3, 0.2, 0.1};
        const auto curve = energy_curve(p.sys, p.state, eps_list, p.grid.h());
        double margin = 1e300;
        for (std::size_t i = 0; i + 1 < curve.size(); ++i)
          margin = std::min(margin, curve[i + 1].second - curve[i].second);
        emit("monotone", margin > 1e-10, margin, 1e-10, ">");
      } else if (check == "ortho") {
        std::cout << "SKIP ortho: characteristic-space check applies to scalar equations\n";
        report["ortho"] = "skipped";
      } else if (check == "optimality") {
        const OptimalSolution sol = optimal_system(p.sys, p.state, p.eps, p.grid);
        const MomentConstraints mc = system_moment_constraints(p.sys, p.state, p.eps, p.grid);
        std::mt19937_64 rng(ctx.seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        bool ok = true;
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
          Vector perturb(sol.generator.size());
          for (Eigen::Index i = 0; i < perturb.size(); ++i) perturb[i] = gauss(rng);
          const RealGridFunction cand = project_onto_constraints(
              RealGridFunction(0.0, p.eps, sol.generator.data() + perturb), mc);
          const double dist = (cand - sol.generator).norm_l2();
          const double e = assemble_system_control(p.sys, p.state, cand, p.grid).energy();
          if (e < sol.energy - 1e-12 * std::max(1.0, sol.energy)) ok = false;
          if (dist >= 1e-4 && e <= sol.energy) ok = false;
          worst = std::max(worst, sol.energy - e);
        }
        emit("optimality", ok, worst, 0.0, "excess<=");
      } else {
        throw ConfigError("config error: unknown check '" + check + "'");
      }
    }
  }

  write_json(ctx.out_dir / "verify_report.json", report);
  ctx.outputs.push_back("verify_report.json");
  finish_manifest(ctx, manifest_skeleton(ctx), report);
  return all_pass ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"minimum-energy null controls for linear time-delay equations"};
  app.set_help_flag("--help", "print help");  // keep -h free for the grid step
  app.require_subcommand(1);

  RunContext ctx;
  std::string u_source = "zero";
  double t_end = -1.0;
  std::string window_arg;
  std::string checks_arg;

  auto add_common = [&](CLI::App* sub) {
    sub->set_help_flag("--help", "print help");
    sub->add_option("--config", ctx.config_path, "problem config (JSON)")->required();
    sub->add_option("--out", ctx.out_dir, "output directory")->default_val(".");
    sub->add_option("--h", ctx.h_override, "grid step override");
    sub->add_option("--seed", ctx.seed, "random seed");
    sub->add_option("--format", ctx.format, "csv|json");
  };

  CLI::App* sim = app.add_subcommand("simulate", "integrate the trajectory under a control");
  add_common(sim);
  sim->add_option("--u", u_source, "control source: zero | optimal | <csv path>");
  sim->add_option("--t-end", t_end, "simulation end time");

  CLI::App* opt = app.add_subcommand("optimal", "closed-form minimum-energy control");
  add_common(opt);

  CLI::App* ver = app.add_subcommand("verify", "run acceptance-style checks");
  add_common(ver);
  ver->add_option("--checks", checks_arg, "comma list: null,oracle,ortho,monotone,optimality");
  std::string verify_u;
  ver->add_option("--u", verify_u, "control CSV for the null check (default: optimal)");

  CLI::App* spec = app.add_subcommand("spectrum", "characteristic zeros in a window");
  add_common(spec);
  spec->add_option("--window", window_arg, "re0,re1,im0,im1");

  CLI::App* orc = app.add_subcommand("oracle", "discretized KKT solution");
  add_common(orc);

  CLI11_PARSE(app, argc, argv);

  try {
    if (ctx.format != "csv" && ctx.format != "json")
      throw ConfigError("config error: --format must be csv or json");
    ctx.raw_config = load_raw(ctx.config_path);
    fs::create_directories(ctx.out_dir);
    if (sim->parsed()) {
      ctx.command = "simulate";
      return cmd_simulate(ctx, u_source, t_end);
    }
    if (opt->parsed()) {
      ctx.command = "optimal";
      return cmd_optimal(ctx);
    }
    if (ver->parsed()) {
      ctx.command = "verify";
      std::vector<std::string> checks;
      std::size_t pos = 0;
      while (pos < checks_arg.size()) {
        const auto comma = checks_arg.find(',', pos);
        checks.push_back(checks_arg.substr(pos, comma - pos));
        pos = (comma == std::string::npos) ? checks_arg.size() : comma + 1;
      }
      return cmd_verify(ctx, checks, verify_u);
    }
    if (spec->parsed()) {
      ctx.command = "spectrum";
      return cmd_spectrum(ctx, window_arg);
    }
    ctx.command = "oracle";
    return cmd_oracle(ctx);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const MissingDerivative& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CompatibilityViolation& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const GridError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 3;
  }
}
