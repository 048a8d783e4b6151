#include "delayctrl/config_io.hpp"

#include <cstdio>
#include <fstream>

namespace delayctrl {

using nlohmann::json;

RealGridFunction FunctionSpec::materialize(double t0, double t1, Eigen::Index m) const {
  switch (kind) {
    case Kind::Constant:
      return RealGridFunction::constant(t0, t1, m, value);
    case Kind::Poly:
      return RealGridFunction::from_fn(t0, t1, m, [this](double t) { return poly(t); });
    case Kind::Samples:
      if (samples.size() != m + 1)
        throw ConfigError("config error: key 'samples' has " + std::to_string(samples.size()) +
                          " entries, grid needs " + std::to_string(m + 1));
      return RealGridFunction(t0, t1, samples);
  }
  throw ConfigError("config error: bad function spec");
}

FunctionSpec FunctionSpec::derivative() const {
  FunctionSpec d;
  if (kind == Kind::Constant) {
    d.kind = Kind::Constant;
    d.value = 0.0;
  } else if (kind == Kind::Poly) {
    d.kind = Kind::Poly;
    d.poly = poly.derivative();
  } else {
    throw ConfigError("config error: cannot differentiate sampled data");
  }
  return d;
}

namespace {

Vector parse_vector(const json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError("config error: key '" + key + "' must be an array");
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw ConfigError("config error: key '" + key + "' has a non-numeric entry");
    v[i] = j[i].get<double>();
  }
  return v;
}

FunctionSpec parse_function(const json& j, const std::string& key) {
  FunctionSpec f;
  if (j.is_number()) {
    f.kind = FunctionSpec::Kind::Constant;
    f.value = j.get<double>();
    return f;
  }
  if (!j.is_object()) throw ConfigError("config error: key '" + key + "' must be a number or object");
  if (j.contains("const")) {
    f.kind = FunctionSpec::Kind::Constant;
    if (!j["const"].is_number())
      throw ConfigError("config error: key '" + key + ".const' must be a number");
    f.value = j["const"].get<double>();
  } else if (j.contains("poly")) {
    f.kind = FunctionSpec::Kind::Poly;
    f.poly.coeffs = parse_vector(j["poly"], key + ".poly");
  } else if (j.contains("samples")) {
    f.kind = FunctionSpec::Kind::Samples;
    f.samples = parse_vector(j["samples"], key + ".samples");
  } else {
    throw ConfigError("config error: key '" + key + "' needs 'const', 'poly' or 'samples'");
  }
  return f;
}

}  // namespace

ProblemConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config error: top level must be an object");
  ProblemConfig cfg;
  if (!doc.contains("type") || !doc["type"].is_string())
    throw ConfigError("config error: key 'type' (retarded|neutral|system) is required");
  const std::string type = doc["type"].get<std::string>();
  if (type == "retarded") cfg.type = ProblemConfig::Type::Retarded;
  else if (type == "neutral") cfg.type = ProblemConfig::Type::Neutral;
  else if (type == "system") cfg.type = ProblemConfig::Type::System;
  else throw ConfigError("config error: key 'type' must be retarded|neutral|system");

  if (doc.contains("epsilon")) {
    if (!doc["epsilon"].is_number()) throw ConfigError("config error: key 'epsilon' must be a number");
    cfg.epsilon = doc["epsilon"].get<double>();
  }
  if (doc.contains("grid_h")) {
    if (!doc["grid_h"].is_number() || doc["grid_h"].get<double>() <= 0.0)
      throw ConfigError("config error: key 'grid_h' must be a positive number");
    cfg.grid_h = doc["grid_h"].get<double>();
  }

  if (cfg.type == ProblemConfig::Type::System) {
    if (doc.contains("g")) {
      cfg.g = parse_vector(doc["g"], "g");
    } else if (doc.contains("A") && doc.contains("b")) {
      const json& ja = doc["A"];
      if (!ja.is_array() || ja.empty()) throw ConfigError("config error: key 'A' must be a matrix");
      const std::size_t n = ja.size();
      cfg.A.resize(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        const Vector row = parse_vector(ja[i], "A");
        if (row.size() != static_cast<Eigen::Index>(n))
          throw ConfigError("config error: key 'A' must be square");
        cfg.A.row(i) = row.transpose();
      }
      cfg.b = parse_vector(doc["b"], "b");
      if (cfg.b.size() != static_cast<Eigen::Index>(n))
        throw ConfigError("config error: key 'b' length must match A");
      cfg.has_matrix = true;
    } else {
      throw ConfigError("config error: system config needs 'g' or 'A'+'b'");
    }
    if (!doc.contains("y")) throw ConfigError("config error: key 'y' is required");
    cfg.y_vector = parse_vector(doc["y"], "y");
    if (!doc.contains("x0")) throw ConfigError("config error: key 'x0' is required");
    if (doc["x0"].is_array()) {
      for (std::size_t i = 0; i < doc["x0"].size(); ++i)
        cfg.x0_components.push_back(parse_function(doc["x0"][i], "x0"));
    } else {
      // one spec broadcast over all components
      const FunctionSpec f = parse_function(doc["x0"], "x0");
      for (Eigen::Index i = 0; i < cfg.y_vector.size(); ++i) cfg.x0_components.push_back(f);
    }
    return cfg;
  }

  if (!doc.contains("delays")) throw ConfigError("config error: key 'delays' is required");
  cfg.delays = parse_vector(doc["delays"], "delays");
  if (!doc.contains("a")) throw ConfigError("config error: key 'a' is required");
  cfg.a = parse_vector(doc["a"], "a");
  cfg.d = doc.contains("d") ? parse_vector(doc["d"], "d") : Vector();
  if (cfg.type == ProblemConfig::Type::Retarded && cfg.d.size() != 0 && !cfg.d.isZero(0.0))
    throw ConfigError("config error: key 'd' must be absent or zero for retarded equations");

  if (!doc.contains("y") || !doc["y"].is_number())
    throw ConfigError("config error: key 'y' (number) is required");
  cfg.y_scalar = doc["y"].get<double>();
  if (!doc.contains("x0")) throw ConfigError("config error: key 'x0' is required");
  cfg.x0 = parse_function(doc["x0"], "x0");
  if (doc.contains("x0_deriv")) cfg.x0_deriv = parse_function(doc["x0_deriv"], "x0_deriv");
  return cfg;
}

ProblemConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config error: cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config error: ") + e.what());
  }
  return parse_config(doc);
}

Problem materialize(const ProblemConfig& config, double h_override) {
  const double h = h_override > 0.0 ? h_override : config.grid_h;
  if (config.type == ProblemConfig::Type::System) {
    RetardedSystem sys = config.has_matrix ? RetardedSystem(config.A, config.b)
                                           : RetardedSystem::companion(config.g);
    Matrix g_map = Matrix::Identity(sys.dim(), sys.dim());
    if (!sys.has_companion_form()) {
      CompanionTransform ct = to_companion(sys);
      g_map = ct.G;
      sys = std::move(ct.system);
    }
    const GridSpec grid = GridSpec::for_system(config.epsilon, h);
    const Eigen::Index n = sys.dim();
    if (config.y_vector.size() != n) throw ConfigError("config error: key 'y' length mismatch");
    if (static_cast<Eigen::Index>(config.x0_components.size()) != n)
      throw ConfigError("config error: key 'x0' needs one entry per component");

    // sample raw histories, then rotate into companion coordinates
    std::vector<RealGridFunction> raw;
    for (Eigen::Index i = 0; i < n; ++i)
      raw.push_back(config.x0_components[i].materialize(-1.0, 0.0, grid.per_unit));
    SystemInitialState state{g_map * config.y_vector, {}};
    for (Eigen::Index i = 0; i < n; ++i) {
      Vector comp = Vector::Zero(grid.per_unit + 1);
      for (Eigen::Index j = 0; j < n; ++j) comp += g_map(i, j) * raw[j].data();
      state.x0.emplace_back(-1.0, 0.0, std::move(comp));
    }
    return SystemProblem{std::move(sys), std::move(state), config.epsilon, grid};
  }

  DelayEquation eq(config.delays, config.a, config.d);
  if (config.type == ProblemConfig::Type::Neutral && !eq.is_neutral())
    throw ConfigError("config error: type 'neutral' requires d_N != 0");
  const GridSpec grid = GridSpec::for_equation(eq, config.epsilon, h);
  InitialState state{config.y_scalar, config.x0.materialize(-1.0, 0.0, grid.per_unit),
                     std::nullopt};
  if (config.x0_deriv)
    state.x0_deriv = config.x0_deriv->materialize(-1.0, 0.0, grid.per_unit);
  return ScalarProblem{std::move(eq), std::move(state), config.epsilon, grid};
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<Vector>& columns) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  const Eigen::Index rows = columns.empty() ? 0 : columns[0].size();
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c)
      out << (c ? "," : "") << format_double(columns[c][r]);
    out << "\n";
  }
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory<double>& traj) {
  const auto& x = traj.values;
  Vector t(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) t[i] = x.node(i);
  std::vector<std::string> header{"t", "x"};
  std::vector<Vector> cols{t, x.data()};
  if (traj.deriv) {
    header.push_back("dx");
    cols.push_back(traj.deriv->data());
  }
  write_csv(path, header, cols);
}

void write_trajectory_csv(const std::filesystem::path& path, const SystemTrajectory& traj) {
  const auto& first = traj.components.front();
  Vector t(first.size());
  for (Eigen::Index i = 0; i < first.size(); ++i) t[i] = first.node(i);
  std::vector<std::string> header{"t"};
  std::vector<Vector> cols{t};
  for (std::size_t j = 0; j < traj.components.size(); ++j) {
    header.push_back("x_" + std::to_string(j + 1));
    cols.push_back(traj.components[j].data());
  }
  write_csv(path, header, cols);
}

void write_control_csv(const std::filesystem::path& path, const ControlSignal& control) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "t,u,segment_label\n";
  for (const auto& seg : control.segments()) {
    const auto& f = seg.values;
    for (Eigen::Index i = 0; i < f.size(); ++i)
      out << format_double(f.node(i)) << "," << format_double(f[i]) << ","
          << to_string(seg.label, seg.index) << "\n";
  }
}

void write_grid_csv(const std::filesystem::path& path, const std::string& name,
                    const RealGridFunction& f) {
  Vector t(f.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) t[i] = f.node(i);
  write_csv(path, {"t", name}, {t, f.data()});
}

void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& spec) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "re,im,residual\n";
  for (std::size_t i = 0; i < spec.zeros.size(); ++i)
    out << format_double(spec.zeros[i].real()) << "," << format_double(spec.zeros[i].imag())
        << "," << format_double(spec.residuals[i]) << "\n";
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

namespace {
json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector nodes_of(const RealGridFunction& f) {
  Vector t(f.size());
  for (Eigen::Index i = 0; i < f.size(); ++i) t[i] = f.node(i);
  return t;
}
}  // namespace

json trajectory_to_json(const Trajectory<double>& traj) {
  json doc;
  doc["t"] = vector_to_json(nodes_of(traj.values));
  doc["x"] = vector_to_json(traj.values.data());
  if (traj.deriv) doc["dx"] = vector_to_json(traj.deriv->data());
  return doc;
}

json trajectory_to_json(const SystemTrajectory& traj) {
  json doc;
  doc["t"] = vector_to_json(nodes_of(traj.components.front()));
  for (std::size_t j = 0; j < traj.components.size(); ++j)
    doc["x_" + std::to_string(j + 1)] = vector_to_json(traj.components[j].data());
  return doc;
}

json control_to_json(const ControlSignal& control) {
  json doc;
  json t = json::array(), u = json::array(), label = json::array();
  for (const auto& seg : control.segments()) {
    for (Eigen::Index i = 0; i < seg.values.size(); ++i) {
      t.push_back(seg.values.node(i));
      u.push_back(seg.values[i]);
      label.push_back(to_string(seg.label, seg.index));
    }
  }
  doc["t"] = std::move(t);
  doc["u"] = std::move(u);
  doc["segment_label"] = std::move(label);
  return doc;
}

json grid_to_json(const std::string& name, const RealGridFunction& f) {
  json doc;
  doc["t"] = vector_to_json(nodes_of(f));
  doc[name] = vector_to_json(f.data());
  return doc;
}

json spectrum_to_json(const Spectrum& spec) {
  json doc;
  json re = json::array(), im = json::array(), res = json::array();
  for (std::size_t i = 0; i < spec.zeros.size(); ++i) {
    re.push_back(spec.zeros[i].real());
    im.push_back(spec.zeros[i].imag());
    res.push_back(spec.residuals[i]);
  }
  doc["re"] = std::move(re);
  doc["im"] = std::move(im);
  doc["residual"] = std::move(res);
  return doc;
}

}  // namespace delayctrl
