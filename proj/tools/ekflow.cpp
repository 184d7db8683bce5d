#include "ekflow/scenario.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace sc = ekflow::scenario;

namespace {

struct Common {
  std::string config;
  std::string preset;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<double> t_end;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Scenario config (INI with TOML-style sections)");
  cmd->add_option("--preset", c.preset, "Named preset supplying defaults; see `catalog`");
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
  cmd->add_option("--seed", c.seed, "Seed for random initial data");
  cmd->add_option("--t-end", c.t_end, "Final time");
  cmd->add_flag("--quiet", c.quiet, "No progress output");
}

int run(sc::Kind kind, const Common& c) {
  sc::Resolved resolved;
  try {
    if (c.config.empty() && c.preset.empty()) throw sc::ConfigError("one of --config or --preset is required");
    const std::string text = c.config.empty() ? std::string() : sc::read_text(c.config);
    sc::ScenarioConfig cfg = sc::parse_config(text, kind, c.config.empty() ? "config" : c.config,
                                              c.preset.empty() ? std::nullopt : std::optional<std::string>(c.preset));
    if (!cfg.lattice_file.empty() && !c.config.empty()) {
      const std::filesystem::path lf(cfg.lattice_file);
      if (lf.is_relative()) cfg.lattice_file = (std::filesystem::path(c.config).parent_path() / lf).string();
    }
    if (c.seed) cfg.seed = c.seed;
    if (c.t_end) {
      if (!(*c.t_end >= 0.0) || !std::isfinite(*c.t_end)) throw sc::ConfigError("--t-end must be a nonnegative number");
      cfg.t_end = *c.t_end;
    }
    resolved = sc::resolve(cfg);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  try {
    return sc::run_resolved(resolved, c.out, c.quiet ? nullptr : &std::cerr).exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extremal flow on conformal surfaces and its class-level dynamics"};
  app.require_subcommand(1);

  Common surface, klass, critical, diag;
  std::string lattice_file;
  auto* s = app.add_subcommand("surface-flow", "Integrate the flow of a surface potential");
  auto* k = app.add_subcommand("class-flow", "Integrate the class flow on an intersection lattice");
  auto* c = app.add_subcommand("critical-class", "Solve for the critical classes of a lattice");
  auto* d = app.add_subcommand("diagnostics", "Evaluate diagnostics of an initial potential");
  auto* cat = app.add_subcommand("catalog", "List models, lattices, presets and defaults");
  add_common(s, surface);
  add_common(k, klass);
  add_common(c, critical);
  add_common(d, diag);
  cat->add_option("--lattices", lattice_file, "Extra lattice catalog (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*s) return run(sc::Kind::SurfaceFlow, surface);
  if (*k) return run(sc::Kind::ClassFlow, klass);
  if (*c) return run(sc::Kind::CriticalClass, critical);
  if (*d) return run(sc::Kind::Diagnostics, diag);
  try {
    std::vector<ekflow::LatticePtr> extra;
    if (!lattice_file.empty()) extra = ekflow::load_lattice_file(lattice_file);
    std::cout << sc::catalog_text(ekflow::merged_catalog(extra));
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
