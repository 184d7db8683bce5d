#pragma once

// Scenario configs, runners and the artifacts they write.
//
// A config is an INI file with TOML-style sections:
//   [scenario] name, preset, kind
//   [model] surface, modes
//   [lattice] name, file
//   [initial] mode, seed, amplitude, coefficients, class, normalize
//   [time] t_end, dt_initial, dt_floor, cfl, growth
//   [tolerances] blowup, converged, monotonicity, volume, inner_product,
//                projector_rebuild_every, scalar_residual_every, class_local
//   [output] csv, summary, every
// Defaults are listed by catalog_text().

#include "ekflow/class_flow.hpp"
#include "ekflow/extremal_flow.hpp"
#include "ekflow/lattice_io.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ekflow::scenario {

namespace fs = std::filesystem;
using boost::property_tree::ptree;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Kind { SurfaceFlow, ClassFlow, Diagnostics, CriticalClass };

inline const char* to_string(Kind k) {
  switch (k) {
    case Kind::SurfaceFlow: return "surface-flow";
    case Kind::ClassFlow: return "class-flow";
    case Kind::Diagnostics: return "diagnostics";
    case Kind::CriticalClass: return "critical-class";
  }
  return "?";
}

inline std::optional<Kind> parse_kind(const std::string& s) {
  for (Kind k : {Kind::SurfaceFlow, Kind::ClassFlow, Kind::Diagnostics, Kind::CriticalClass}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

inline bool uses_surface(Kind k) { return k == Kind::SurfaceFlow || k == Kind::Diagnostics; }

struct Preset {
  std::string name;
  Kind kind;
  std::string description;
  std::string ini;
};

inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = {
      {"cp2_fixed", Kind::ClassFlow, "CP2 from the critical class sqrt(2) H",
       "[lattice]\nname = CP2\n[initial]\nmode = class\nclass = 1.4142135623730951\n[time]\nt_end = 1\n"},
      {"blowup1_class", Kind::ClassFlow, "CP2 blown up once, from the (2,-1) direction",
       "[lattice]\nname = CP2_blowup1\n[initial]\nmode = class\nclass = 2, -1\n[time]\nt_end = 5\n"},
      {"k3_constant", Kind::ClassFlow, "c1 = 0 lattice, constant trajectory",
       "[lattice]\nname = K3_clip3\n[initial]\nmode = class\nclass = 1, 2, -0.5\n[time]\nt_end = 10\n"},
      {"sphere_relax", Kind::SurfaceFlow, "random axisymmetric sphere potential relaxing to the round metric",
       "[model]\nsurface = sphere\nmodes = 64\n[initial]\nmode = random\nseed = 7\namplitude = 0.05\n"
       "[time]\nt_end = 2\n"},
      {"torus_decay", Kind::SurfaceFlow, "two-mode torus potential decaying to the flat metric",
       "[model]\nsurface = torus\nmodes = 24\n[initial]\nmode = coefficients\n"
       "coefficients = cos1*1:0.02, 1*cos1:0.01\n[time]\nt_end = 2\n"},
  };
  return all;
}

inline const Preset* find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return &p;
  return nullptr;
}

enum class InitialMode { Zero, Random, Coefficients, Class };

struct ScenarioConfig {
  Kind kind = Kind::SurfaceFlow;
  std::string name = "scenario";

  SurfaceKind surface = SurfaceKind::AxisymSphere;
  int modes = 32;

  std::string lattice_name;
  std::string lattice_file;

  InitialMode initial = InitialMode::Zero;
  std::optional<std::uint64_t> seed;
  double amplitude = 0.05;
  std::vector<std::pair<std::string, double>> coefficients;
  std::vector<double> class_coeffs;
  bool normalize = true;

  double t_end = 1.0;
  FlowPolicy flow;
  ClassPolicy class_policy;
  double surface_converged = 1e-8;

  std::string csv_name = "trajectory.csv";
  std::string summary_name = "summary.json";
  int every = 1;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  s = s.substr(b, e - b + 1);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& text) {
  try {
    size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a finite number: '" + text + "'");
  }
}

inline long to_long(const std::string& key, const std::string& text) {
  try {
    size_t used = 0;
    const long v = std::stol(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not an integer: '" + text + "'");
  }
}

inline std::uint64_t to_u64(const std::string& key, const std::string& text) {
  try {
    size_t used = 0;
    if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not an unsigned integer: '" + text + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": not a boolean: '" + text + "'");
}

inline const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"scenario", {"name", "preset", "kind"}},
      {"model", {"surface", "modes"}},
      {"lattice", {"name", "file"}},
      {"initial", {"mode", "seed", "amplitude", "coefficients", "class", "normalize"}},
      {"time", {"t_end", "dt_initial", "dt_floor", "cfl", "growth"}},
      {"tolerances",
       {"blowup", "converged", "monotonicity", "volume", "inner_product", "projector_rebuild_every",
        "scalar_residual_every", "class_local"}},
      {"output", {"csv", "summary", "every"}},
  };
  return s;
}

inline ptree parse_ini(const std::string& text, const std::string& origin) {
  ptree pt;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [section, body] : pt) {
    const auto it = schema().find(section);
    if (it == schema().end() || !body.data().empty()) {
      throw ConfigError(origin + ": unknown section or top-level key '" + section + "'");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw ConfigError(origin + ": unknown key '" + section + "." + key + "'");
      if (!value.empty()) throw ConfigError(origin + ": nested value under '" + section + "." + key + "'");
    }
  }
  return pt;
}

inline void overlay(ptree& base, const ptree& top) {
  for (const auto& [section, body] : top)
    for (const auto& [key, value] : body) base.put(ptree::path_type(section + "." + key, '.'), value.data());
}

inline std::optional<std::string> get(const ptree& pt, const std::string& section, const std::string& key) {
  const auto v = pt.get_optional<std::string>(ptree::path_type(section + "." + key, '.'));
  if (!v) return std::nullopt;
  return trim(*v);
}

}  // namespace detail

/// Builds a config from INI text. The subcommand fixes the kind; a preset
/// named in [scenario] supplies defaults that the text then overrides.
inline ScenarioConfig parse_config(const std::string& text, Kind kind, const std::string& origin = "config",
                                   const std::optional<std::string>& preset_override = std::nullopt) {
  using namespace detail;
  const ptree user = parse_ini(text, origin);
  ptree pt;
  ScenarioConfig c;
  c.kind = kind;
  std::optional<std::string> preset_name = preset_override;
  if (!preset_name) preset_name = get(user, "scenario", "preset");
  if (preset_name) {
    const Preset* p = find_preset(*preset_name);
    if (!p) throw ConfigError("unknown preset '" + *preset_name + "'");
    const bool compatible = p->kind == kind || (p->kind == Kind::SurfaceFlow && kind == Kind::Diagnostics) ||
                            (p->kind == Kind::ClassFlow && kind == Kind::CriticalClass);
    if (!compatible) throw ConfigError("preset '" + p->name + "' is a " + to_string(p->kind) + " preset");
    pt = parse_ini(p->ini, "preset " + p->name);
    c.name = p->name;
  }
  overlay(pt, user);

  if (auto v = get(pt, "scenario", "kind")) {
    const auto k = parse_kind(*v);
    if (!k) throw ConfigError("scenario.kind: unknown kind '" + *v + "'");
    if (*k != kind) throw ConfigError(std::string("scenario.kind is ") + *v + " but the subcommand is " + to_string(kind));
  }
  if (auto v = get(pt, "scenario", "name")) c.name = *v;

  if (uses_surface(kind)) {
    const auto surface = get(pt, "model", "surface");
    if (!surface) throw ConfigError("model.surface is required");
    if (*surface == "sphere") c.surface = SurfaceKind::AxisymSphere;
    else if (*surface == "torus") c.surface = SurfaceKind::FlatTorus;
    else if (auto k = parse_surface_kind(*surface)) c.surface = *k;
    else throw ConfigError("model.surface: unknown surface '" + *surface + "'");
    if (auto v = get(pt, "model", "modes")) c.modes = static_cast<int>(to_long("model.modes", *v));
    const int hi = c.surface == SurfaceKind::AxisymSphere ? SurfaceModel::kMaxSphereModes : SurfaceModel::kMaxTorusModes;
    if (c.modes < SurfaceModel::kMinModes || c.modes > hi) {
      throw ConfigError("model.modes must lie in [" + std::to_string(SurfaceModel::kMinModes) + ", " +
                        std::to_string(hi) + "]");
    }
  } else {
    const auto name = get(pt, "lattice", "name");
    if (!name) throw ConfigError("lattice.name is required");
    c.lattice_name = *name;
    if (auto v = get(pt, "lattice", "file")) c.lattice_file = *v;
  }

  std::optional<std::string> mode = get(pt, "initial", "mode");
  if (!mode) {
    if (get(pt, "initial", "coefficients")) mode = "coefficients";
    else if (get(pt, "initial", "class")) mode = "class";
    else if (get(pt, "initial", "seed")) mode = "random";
    else mode = uses_surface(kind) ? "zero" : "class";
  }
  if (*mode == "zero") c.initial = InitialMode::Zero;
  else if (*mode == "random") c.initial = InitialMode::Random;
  else if (*mode == "coefficients") c.initial = InitialMode::Coefficients;
  else if (*mode == "class") c.initial = InitialMode::Class;
  else throw ConfigError("initial.mode: unknown mode '" + *mode + "'");
  const bool allowed = uses_surface(kind) ? c.initial != InitialMode::Class
                                          : c.initial == InitialMode::Class || c.initial == InitialMode::Random;
  if (!allowed) throw ConfigError("initial.mode '" + *mode + "' does not apply to " + to_string(kind));
  if (auto v = get(pt, "initial", "seed")) c.seed = to_u64("initial.seed", *v);
  if (auto v = get(pt, "initial", "amplitude")) c.amplitude = to_double("initial.amplitude", *v);
  if (auto v = get(pt, "initial", "normalize")) c.normalize = to_bool("initial.normalize", *v);
  if (auto v = get(pt, "initial", "coefficients")) {
    for (const auto& item : split(*v, ',')) {
      const auto colon = item.rfind(':');
      if (colon == std::string::npos) throw ConfigError("initial.coefficients: expected name:value, got '" + item + "'");
      c.coefficients.emplace_back(trim(item.substr(0, colon)),
                                  to_double("initial.coefficients", trim(item.substr(colon + 1))));
    }
  }
  if (auto v = get(pt, "initial", "class")) {
    for (const auto& item : split(*v, ',')) c.class_coeffs.push_back(to_double("initial.class", item));
  }
  if (c.initial == InitialMode::Coefficients && c.coefficients.empty()) {
    throw ConfigError("initial.coefficients is required for mode 'coefficients'");
  }
  if (c.initial == InitialMode::Class && c.class_coeffs.empty() && kind == Kind::ClassFlow) {
    throw ConfigError("initial.class is required for mode 'class'");
  }

  auto number = [&](const char* section, const char* key, double& target) {
    if (auto v = get(pt, section, key)) target = to_double(std::string(section) + "." + key, *v);
  };
  auto integer = [&](const char* section, const char* key, int& target) {
    if (auto v = get(pt, section, key)) target = static_cast<int>(to_long(std::string(section) + "." + key, *v));
  };
  number("time", "t_end", c.t_end);
  number("time", "dt_initial", c.flow.dt_initial);
  number("time", "dt_floor", c.flow.dt_floor);
  number("time", "cfl", c.flow.cfl);
  number("time", "growth", c.flow.growth);
  number("tolerances", "blowup", c.flow.blowup_ceiling);
  number("tolerances", "monotonicity", c.flow.monotonicity_slack);
  number("tolerances", "volume", c.flow.volume_tolerance);
  number("tolerances", "class_local", c.class_policy.local_tolerance);
  integer("tolerances", "projector_rebuild_every", c.flow.projector_rebuild_every);
  integer("tolerances", "scalar_residual_every", c.flow.scalar_residual_every);
  if (auto v = get(pt, "tolerances", "converged")) {
    c.surface_converged = to_double("tolerances.converged", *v);
    c.class_policy.converged_tolerance = c.surface_converged;
  }
  if (auto v = get(pt, "tolerances", "inner_product")) {
    if (*v == "current") c.flow.inner_product = InnerProductMode::CurrentMetric;
    else if (*v == "background") c.flow.inner_product = InnerProductMode::BackgroundMetric;
    else throw ConfigError("tolerances.inner_product must be 'current' or 'background'");
  }
  if (auto v = get(pt, "output", "csv")) c.csv_name = *v;
  if (auto v = get(pt, "output", "summary")) c.summary_name = *v;
  integer("output", "every", c.every);

  if (c.t_end < 0.0) throw ConfigError("time.t_end must be nonnegative");
  if (c.flow.dt_initial < 0.0) throw ConfigError("time.dt_initial must be nonnegative");
  if (!(c.flow.dt_floor > 0.0)) throw ConfigError("time.dt_floor must be positive");
  if (!(c.flow.cfl > 0.0)) throw ConfigError("time.cfl must be positive");
  if (!(c.flow.growth >= 1.0)) throw ConfigError("time.growth must be at least 1");
  if (!(c.flow.blowup_ceiling > 0.0)) throw ConfigError("tolerances.blowup must be positive");
  if (!(c.class_policy.local_tolerance > 0.0)) throw ConfigError("tolerances.class_local must be positive");
  if (c.surface_converged < 0.0) throw ConfigError("tolerances.converged must be nonnegative");
  if (c.flow.projector_rebuild_every < 1) throw ConfigError("tolerances.projector_rebuild_every must be at least 1");
  if (c.flow.scalar_residual_every < 0) throw ConfigError("tolerances.scalar_residual_every must be nonnegative");
  if (!(c.amplitude >= 0.0)) throw ConfigError("initial.amplitude must be nonnegative");
  if (c.every < 1) throw ConfigError("output.every must be at least 1");
  if (c.csv_name.empty() || c.summary_name.empty()) throw ConfigError("output file names must be nonempty");
  c.flow.converged_tolerance = c.surface_converged;
  return c;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Everything a run needs, resolved from a config before anything is written.
struct Resolved {
  ScenarioConfig config;
  ModelPtr model;
  std::optional<KahlerPotential> phi0;
  std::vector<LatticePtr> catalog;
  LatticePtr lattice;
  std::optional<CohClass> omega0;
};

inline Resolved resolve(const ScenarioConfig& c) {
  Resolved r{c, nullptr, std::nullopt, {}, nullptr, std::nullopt};
  if (c.initial == InitialMode::Random && !c.seed) throw ConfigError("initial.seed is required for random initial data");
  if (uses_surface(c.kind)) {
    r.model = build_model(c.surface, c.modes);
    switch (c.initial) {
      case InitialMode::Zero: r.phi0 = KahlerPotential{SpectralField::zero(r.model)}; break;
      case InitialMode::Random: r.phi0 = random_potential(r.model, *c.seed, c.amplitude); break;
      case InitialMode::Coefficients: {
        VectorXd coeffs = VectorXd::Zero(r.model->basis_size());
        for (const auto& [name, value] : c.coefficients) {
          const auto k = r.model->basis_index(name);
          if (!k) throw ConfigError("initial.coefficients: no basis function '" + name + "' in this model");
          if (*k == 0) throw ConfigError("initial.coefficients: the constant mode does not change the metric");
          coeffs(*k) += value;
        }
        r.phi0 = KahlerPotential{SpectralField(r.model, coeffs)};
        break;
      }
      case InitialMode::Class: break;
    }
    return r;
  }

  std::vector<LatticePtr> extra;
  if (!c.lattice_file.empty()) {
    try {
      extra = load_lattice_file(c.lattice_file);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  try {
    r.catalog = merged_catalog(extra);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  r.lattice = find_lattice(r.catalog, c.lattice_name);
  if (!r.lattice) throw ConfigError("unknown lattice '" + c.lattice_name + "'");
  if (c.kind == Kind::CriticalClass) return r;

  if (c.initial == InitialMode::Random) {
    std::mt19937_64 rng(*c.seed);
    try {
      r.omega0 = random_interior_class(r.lattice, rng);
    } catch (const std::runtime_error& e) {
      throw ConfigError(e.what());
    }
    return r;
  }
  if (static_cast<Index>(c.class_coeffs.size()) != r.lattice->rank()) {
    throw ConfigError("initial.class has " + std::to_string(c.class_coeffs.size()) + " entries, lattice rank is " +
                      std::to_string(r.lattice->rank()));
  }
  CohClass omega(r.lattice, Eigen::Map<const VectorXd>(c.class_coeffs.data(), r.lattice->rank()));
  if (c.normalize) {
    if (!(omega.square() > kDegenerateClassTolerance)) throw ConfigError("initial.class has Omega^2 <= 0");
    omega = normalize_volume(omega);
  } else if (std::abs(omega.square() - 2.0) > c.class_policy.volume_tolerance) {
    throw ConfigError("initial.class must satisfy Omega^2 = 2 when normalize = false");
  }
  r.omega0 = omega;
  return r;
}

// ---------------------------------------------------------------------------
// Artifacts

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline const char* kSurfaceHeader = "t,volume,calabi_energy,k_energy,pis_min,pis_max,sup_abs_s,futaki,scalar_residual";

inline double futaki_column(const DiagnosticsRecord& r) {
  double v = 0.0;
  for (double f : r.futaki_values) v = std::abs(f) > std::abs(v) ? f : v;
  return v;
}

inline std::string surface_row(const DiagnosticsRecord& r) {
  std::string s;
  for (double x : {r.t, r.volume, r.calabi_energy, r.k_energy, r.pis_min, r.pis_max, r.sup_abs_s, futaki_column(r),
                   r.scalar_evolution_residual}) {
    if (!s.empty()) s += ',';
    s += fmt(x);
  }
  return s;
}

inline std::string class_header(Index rank) {
  std::string s = "t";
  for (Index i = 0; i < rank; ++i) s += ",omega_" + std::to_string(i);
  return s + ",omega_sq,c1_dot_omega,s_class,in_cone";
}

inline std::string class_row(const ClassSample& c) {
  std::string s = fmt(c.t);
  for (double x : c.omega) s += "," + fmt(x);
  return s + "," + fmt(c.omega_sq) + "," + fmt(c.c1_dot_omega) + "," + fmt(c.s_class) + "," + (c.in_cone ? "1" : "0");
}

inline nlohmann::json number_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); }

inline nlohmann::json to_json(const DiagnosticsRecord& r) {
  return {{"t", r.t},
          {"volume", r.volume},
          {"calabi_energy", r.calabi_energy},
          {"energy_lower_bound", r.energy_lower_bound},
          {"k_energy", r.k_energy},
          {"dissipation", number_or_null(r.dissipation)},
          {"pis_min", r.pis_min},
          {"pis_max", r.pis_max},
          {"pis_rate", r.pis_rate},
          {"futaki", r.futaki_values},
          {"sup_abs_s", r.sup_abs_s},
          {"sup_abs_s_dev", r.sup_abs_s_dev},
          {"sup_abs_rhs", r.sup_abs_rhs},
          {"gauss_bonnet", r.gauss_bonnet},
          {"min_density", r.min_density},
          {"scalar_residual", number_or_null(r.scalar_evolution_residual)}};
}

inline nlohmann::json to_json(const ClassSample& c, const LatticePtr& lattice) {
  const CohClass omega(lattice, c.omega);
  const ConeReport cone = cone_membership(omega);
  nlohmann::json pairings = nlohmann::json::object();
  for (const auto& [name, p] : cone.pairings) pairings[name] = p;
  return {{"t", c.t},
          {"omega", std::vector<double>(c.omega.data(), c.omega.data() + c.omega.size())},
          {"omega_sq", c.omega_sq},
          {"c1_dot_omega", c.c1_dot_omega},
          {"s_class", c.s_class},
          {"in_cone", c.in_cone},
          {"divisor_pairings", pairings},
          {"cone_note", cone.note}};
}

struct RunOutcome {
  int exit_code = 0;
  std::string termination;
  std::string message;
};

namespace detail {

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline int exit_code_for(const std::string& termination) {
  return termination == "Converged" || termination == "TimeLimit" ? 0 : 3;
}

}  // namespace detail

/// Runs a resolved scenario and writes the CSV and the JSON summary into out.
/// The summary is written for every outcome, including flow failures.
inline RunOutcome run_resolved(const Resolved& r, const fs::path& out, std::ostream* log = nullptr) {
  const ScenarioConfig& c = r.config;
  const auto started = std::chrono::steady_clock::now();
  fs::create_directories(out);
  nlohmann::json summary = {{"scenario", c.name}, {"kind", to_string(c.kind)}};
  std::string csv;
  RunOutcome outcome;

  auto keep = [&](size_t i, size_t n) { return i % static_cast<size_t>(c.every) == 0 || i + 1 == n; };

  switch (c.kind) {
    case Kind::SurfaceFlow: {
      const Trajectory traj = run_flow(*r.phi0, c.t_end, c.flow);
      csv = std::string(kSurfaceHeader) + "\n";
      for (size_t i = 0; i < traj.records.size(); ++i)
        if (keep(i, traj.records.size())) csv += surface_row(traj.records[i]) + "\n";
      outcome.termination = ekflow::to_string(traj.termination);
      outcome.message = traj.message;
      summary["final"] = traj.records.empty() ? nlohmann::json() : to_json(traj.records.back());
      summary["accepted_steps"] = traj.accepted_steps;
      summary["rejected_steps"] = traj.rejected_steps;
      summary["model"] = {{"surface", ekflow::to_string(c.surface)}, {"modes", c.modes}};
      break;
    }
    case Kind::Diagnostics: {
      csv = std::string(kSurfaceHeader) + "\n";
      try {
        const FlowState state = make_state(*r.phi0, 0.0, c.flow.inner_product);
        const DiagnosticsRecord rec = diagnostics_record(state, nullptr, nullptr, c.flow, true);
        csv += surface_row(rec) + "\n";
        summary["final"] = to_json(rec);
        std::vector<double> lich;
        for (const auto& f : state.projector.basis()) lich.push_back(lichnerowicz_residual(f, state.metric));
        summary["holomorphy"] = {{"basis_size", state.projector.basis().size()},
                                 {"inner_product", ekflow::to_string(state.projector.mode())},
                                 {"lichnerowicz_residuals", lich}};
        const SpectralField psi = ricci_potential(state.metric, average_scalar_curvature(*r.model));
        summary["ricci_potential_sup"] = psi.values().cwiseAbs().maxCoeff();
        const double dev = (state.s - state.pis).values().cwiseAbs().maxCoeff();
        outcome.termination = dev < c.surface_converged ? "Converged" : "TimeLimit";
      } catch (const PositivityViolation& e) {
        outcome.termination = "PositivityViolation";
        outcome.message = e.what();
        summary["final"] = nullptr;
      }
      summary["model"] = {{"surface", ekflow::to_string(c.surface)}, {"modes", c.modes}};
      break;
    }
    case Kind::ClassFlow: {
      const Index rank = r.lattice->rank();
      csv = class_header(rank) + "\n";
      try {
        const ClassTrajectory traj = class_integrate(*r.omega0, c.t_end, c.class_policy);
        for (size_t i = 0; i < traj.samples.size(); ++i)
          if (keep(i, traj.samples.size())) csv += class_row(traj.samples[i]) + "\n";
        outcome.termination = traj.converged ? "Converged" : "TimeLimit";
        summary["final"] = to_json(traj.samples.back(), r.lattice);
        summary["final"]["rhs_norm"] = traj.final_rhs_norm;
        summary["steps"] = traj.samples.size() - 1;
      } catch (const DegenerateClass& e) {
        outcome.termination = "DegenerateClass";
        outcome.message = e.what();
      } catch (const StepUnderflow& e) {
        outcome.termination = "StepUnderflow";
        outcome.message = e.what();
      }
      summary["lattice"] = {{"name", r.lattice->name()}, {"rank", rank}, {"c1_sq", r.lattice->c1_sq()}};
      break;
    }
    case Kind::CriticalClass: {
      const Index rank = r.lattice->rank();
      const CriticalClasses crit = find_critical_classes(r.lattice);
      csv = class_header(rank) + "\n";
      nlohmann::json list = nlohmann::json::array();
      for (size_t i = 0; i < crit.isolated.size(); ++i) {
        const auto sample = class_sample(0.0, crit.isolated[i]);
        csv += class_row(sample) + "\n";
        auto j = to_json(sample, r.lattice);
        j["attractor"] = i == 0;
        j["rhs_norm"] = class_rhs(crit.isolated[i]).cwiseAbs().maxCoeff();
        list.push_back(j);
      }
      summary["critical_classes"] = list;
      summary["all_classes_critical"] = crit.all_classes_critical;
      summary["null_branch"] = {{"set", crit.null_branch}, {"nonempty", crit.null_branch_nonempty}};
      summary["lattice"] = {{"name", r.lattice->name()}, {"rank", rank}, {"c1_sq", r.lattice->c1_sq()}};
      outcome.termination = "Converged";
      break;
    }
  }

  outcome.exit_code = detail::exit_code_for(outcome.termination);
  summary["termination"] = outcome.termination;
  if (!outcome.message.empty()) summary["message"] = outcome.message;
  summary["exit_code"] = outcome.exit_code;
  summary["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  detail::write_file(out / c.csv_name, csv);
  detail::write_file(out / c.summary_name, summary.dump(2) + "\n");
  if (log) *log << c.name << ": " << outcome.termination << (outcome.message.empty() ? "" : " (" + outcome.message + ")") << "\n";
  return outcome;
}

// ---------------------------------------------------------------------------
// Catalog

inline std::string brief(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

inline std::string catalog_text(const std::vector<LatticePtr>& lattices) {
  std::ostringstream o;
  o << "models\n";
  o << "  AxisymSphere  surface = sphere  modes " << SurfaceModel::kMinModes << ".." << SurfaceModel::kMaxSphereModes
    << "  basis P0..P<modes>\n";
  o << "  FlatTorus     surface = torus   modes " << SurfaceModel::kMinModes << ".." << SurfaceModel::kMaxTorusModes
    << "  basis <x>*<y> with factors 1, cos<k>, sin<k>, k <= (modes-1)/3\n";
  o << "lattices\n";
  for (const auto& l : lattices) {
    o << "  " << l->name() << "  rank " << l->rank() << "  c1^2 = " << brief(l->c1_sq()) << "  divisors";
    if (l->divisors().empty()) o << " (none)";
    for (const auto& d : l->divisors()) o << " " << d.name;
    o << "\n";
  }
  o << "presets\n";
  for (const auto& p : presets()) o << "  " << p.name << "  " << to_string(p.kind) << "  " << p.description << "\n";
  const ScenarioConfig d;
  o << "defaults\n";
  o << "  [model] modes = " << d.modes << "\n";
  o << "  [initial] mode = zero (random needs seed), amplitude = " << brief(d.amplitude) << ", normalize = true\n";
  o << "  [time] t_end = " << brief(d.t_end) << ", dt_initial = 0 (cfl / max eigenvalue), dt_floor = "
    << brief(d.flow.dt_floor) << ", cfl = " << brief(d.flow.cfl) << ", growth = " << brief(d.flow.growth) << "\n";
  o << "  [tolerances] blowup = " << brief(d.flow.blowup_ceiling) << ", converged = " << brief(d.surface_converged)
    << " (class flows: " << brief(d.class_policy.converged_tolerance) << "), monotonicity = "
    << brief(d.flow.monotonicity_slack) << ", volume = " << brief(d.flow.volume_tolerance)
    << ", inner_product = current, projector_rebuild_every = " << d.flow.projector_rebuild_every
    << ", scalar_residual_every = " << d.flow.scalar_residual_every
    << ", class_local = " << brief(d.class_policy.local_tolerance) << "\n";
  o << "  [output] csv = " << d.csv_name << ", summary = " << d.summary_name << ", every = " << d.every << "\n";
  return o.str();
}

}  // namespace ekflow::scenario
