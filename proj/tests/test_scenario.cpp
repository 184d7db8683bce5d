#include "ekflow/scenario.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace ekflow;
using namespace ekflow::scenario;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ekflow_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) { return read_text(p.string()); }

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(EKFLOW_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(ParseConfig, DefaultsAndOverrides) {
  const auto c = parse_config(
      "# comment\n[model]\nsurface = \"torus\"\nmodes = 16\n[time]\n[tolerances]\ninner_product = background\n",
      Kind::SurfaceFlow);
  EXPECT_EQ(c.surface, SurfaceKind::FlatTorus);
  EXPECT_EQ(c.modes, 16);
  EXPECT_EQ(c.initial, InitialMode::Zero);
  EXPECT_EQ(c.t_end, 1.0);
  EXPECT_EQ(c.flow.inner_product, InnerProductMode::BackgroundMetric);
  EXPECT_EQ(c.csv_name, "trajectory.csv");
}

TEST(ParseConfig, PresetOverlay) {
  const auto c = parse_config("[scenario]\npreset = sphere_relax\n[time]\nt_end = 0.5\n", Kind::SurfaceFlow);
  EXPECT_EQ(c.name, "sphere_relax");
  EXPECT_EQ(c.modes, 64);
  EXPECT_EQ(c.initial, InitialMode::Random);
  EXPECT_EQ(c.seed.value(), 7u);
  EXPECT_EQ(c.t_end, 0.5);
  EXPECT_NO_THROW(parse_config("", Kind::Diagnostics, "x", "torus_decay"));
  EXPECT_THROW(parse_config("", Kind::ClassFlow, "x", "torus_decay"), ConfigError);
  EXPECT_THROW(parse_config("", Kind::ClassFlow, "x", "nope"), ConfigError);
}

TEST(ParseConfig, RejectsBadInput) {
  const char* bad[] = {
      "[model]\nsurface = torus\nmodez = 3\n",
      "[modle]\nsurface = torus\n",
      "x = 1\n[model]\nsurface = torus\n",
      "[model]\nsurface = cube\n",
      "[model]\nsurface = torus\nmodes = 3\n",
      "[model]\nsurface = torus\nmodes = sixteen\n",
      "[model]\nsurface = torus\n[time]\nt_end = -1\n",
      "[model]\nsurface = torus\n[time]\nt_end = nan\n",
      "[model]\nsurface = torus\n[initial]\nmode = class\nclass = 1\n",
      "[model]\nsurface = torus\n[initial]\nmode = coefficients\n",
      "[model]\nsurface = torus\n[initial]\ncoefficients = cos1*1\n",
      "[model]\nsurface = torus\n[scenario]\nkind = class-flow\n",
      "[model]\nsurface = torus\n[output]\nevery = 0\n",
      "[model]\nsurface = torus\n[model]\nmodes = 8\n",
      "[initial]\nseed = 1\n",
  };
  for (const char* text : bad) EXPECT_THROW(parse_config(text, Kind::SurfaceFlow), ConfigError) << text;
  EXPECT_THROW(parse_config("[initial]\nclass = 1\n", Kind::ClassFlow), ConfigError);
  EXPECT_THROW(parse_config("[lattice]\nname = CP2\n[initial]\nmode = zero\n", Kind::ClassFlow), ConfigError);
}

TEST(Resolve, NamesMustResolve) {
  EXPECT_THROW(resolve(parse_config("[lattice]\nname = nope\n[initial]\nclass = 1\n", Kind::ClassFlow)), ConfigError);
  EXPECT_THROW(resolve(parse_config("[model]\nsurface = torus\nmodes = 16\n[initial]\ncoefficients = cos9*1:0.1\n",
                                    Kind::SurfaceFlow)),
               ConfigError);
  EXPECT_THROW(resolve(parse_config("[model]\nsurface = sphere\n[initial]\nmode = random\n", Kind::SurfaceFlow)),
               ConfigError);
  EXPECT_THROW(resolve(parse_config("[lattice]\nname = CP2_blowup1\n[initial]\nclass = 1\n", Kind::ClassFlow)),
               ConfigError);
  EXPECT_THROW(resolve(parse_config("[lattice]\nname = CP2_blowup1\n[initial]\nclass = 2, -1\nnormalize = false\n",
                                    Kind::ClassFlow)),
               ConfigError);
  EXPECT_THROW(resolve(parse_config("[lattice]\nname = CP2_blowup1\n[initial]\nclass = 1, -2\n", Kind::ClassFlow)),
               ConfigError);
  const auto r = resolve(parse_config("[lattice]\nname = CP2_blowup1\n[initial]\nclass = 2, -1\n", Kind::ClassFlow));
  EXPECT_NEAR(r.omega0->square(), 2.0, 1e-15);
  const auto p = resolve(parse_config("[model]\nsurface = sphere\nmodes = 8\n[initial]\ncoefficients = P2:0.01, P2:0.01\n",
                                      Kind::SurfaceFlow));
  EXPECT_DOUBLE_EQ(p.phi0->phi.coeffs()(2), 0.02);
}

TEST(RunScenario, TorusDecayConverges) {
  const auto out = fresh_dir("torus");
  auto cfg = parse_config("[model]\nmodes = 16\n", Kind::SurfaceFlow, "t", "torus_decay");
  const auto outcome = run_resolved(resolve(cfg), out);
  EXPECT_EQ(outcome.termination, "Converged");
  EXPECT_EQ(outcome.exit_code, 0);
  const auto rows = csv_rows(out / "trajectory.csv");
  ASSERT_GT(rows.size(), 3u);
  EXPECT_EQ(slurp(out / "trajectory.csv").substr(0, std::string(kSurfaceHeader).size() + 1),
            std::string(kSurfaceHeader) + "\n");
  for (size_t i = 2; i < rows.size(); ++i) EXPECT_LE(std::stod(rows[i][2]), std::stod(rows[i - 1][2])) << i;
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(summary["termination"], "Converged");
  EXPECT_EQ(summary["scenario"], "torus_decay");
  EXPECT_LT(summary["final"]["sup_abs_s"].get<double>(), 1e-8);
  EXPECT_TRUE(summary.contains("wall_time"));
}

TEST(RunScenario, DeterministicCsv) {
  const auto a = fresh_dir("det_a");
  const auto b = fresh_dir("det_b");
  const auto cfg = parse_config("[model]\nmodes = 12\n[time]\nt_end = 0.05\n", Kind::SurfaceFlow, "t", "sphere_relax");
  run_resolved(resolve(cfg), a);
  run_resolved(resolve(cfg), b);
  EXPECT_EQ(slurp(a / "trajectory.csv"), slurp(b / "trajectory.csv"));
}

TEST(RunScenario, ClassFixedPointRowsAreConstant) {
  const auto out = fresh_dir("cp2");
  const auto outcome = run_resolved(resolve(parse_config("", Kind::ClassFlow, "t", "cp2_fixed")), out);
  EXPECT_EQ(outcome.termination, "Converged");
  const auto rows = csv_rows(out / "trajectory.csv");
  ASSERT_GT(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"t", "omega_0", "omega_sq", "c1_dot_omega", "s_class", "in_cone"}));
  for (size_t i = 2; i < rows.size(); ++i) {
    EXPECT_EQ(std::vector<std::string>(rows[i].begin() + 1, rows[i].end()),
              std::vector<std::string>(rows[1].begin() + 1, rows[1].end()));
  }
}

TEST(RunScenario, CriticalClassReport) {
  const auto out = fresh_dir("crit");
  run_resolved(resolve(parse_config("[lattice]\nname = CP2_blowup1\n", Kind::CriticalClass)), out);
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  ASSERT_EQ(summary["critical_classes"].size(), 2u);
  EXPECT_EQ(summary["critical_classes"][0]["omega"], nlohmann::json({1.5, -0.5}));
  EXPECT_TRUE(summary["critical_classes"][0]["attractor"].get<bool>());
  EXPECT_FALSE(summary["null_branch"]["nonempty"].get<bool>());
}

TEST(RunScenario, FailureStillWritesSummary) {
  const auto out = fresh_dir("pos");
  const auto outcome = run_resolved(
      resolve(parse_config("[model]\nsurface = torus\nmodes = 16\n[initial]\ncoefficients = cos1*1:0.2\n",
                           Kind::SurfaceFlow)),
      out);
  EXPECT_EQ(outcome.exit_code, 3);
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(summary["termination"], "PositivityViolation");
}

TEST(Catalog, ListsBuiltins) {
  const auto text = catalog_text(merged_catalog({}));
  EXPECT_NE(text.find("AxisymSphere"), std::string::npos);
  EXPECT_NE(text.find("FlatTorus"), std::string::npos);
  EXPECT_NE(text.find("CP2_blowup1  rank 2  c1^2 = 8"), std::string::npos);
  EXPECT_EQ(text, catalog_text(merged_catalog(lattices_from_json_text(""))));
}

TEST(Cli, ExitCodesAndArtifacts) {
  const auto dir = fresh_dir("cli");
  fs::create_directories(dir);
  {
    std::ofstream(dir / "bad.ini") << "[lattice]\nname = nope\n[initial]\nclass = 1\n";
    std::ofstream(dir / "empty.json") << "";
  }
  EXPECT_EQ(cli("class-flow --config " + (dir / "bad.ini").string() + " --out " + (dir / "bad").string()), 2);
  EXPECT_FALSE(fs::exists(dir / "bad"));
  EXPECT_EQ(cli("surface-flow --out " + (dir / "none").string()), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("catalog --lattices " + (dir / "empty.json").string()), 0);
  EXPECT_EQ(cli("class-flow --preset k3_constant --quiet --t-end 0.5 --out " + (dir / "k3").string()), 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "k3" / "summary.json"));
  EXPECT_EQ(summary["final"]["t"].get<double>(), 0.5);
  EXPECT_EQ(cli("diagnostics --preset sphere_relax --seed 3 --quiet --out " + (dir / "d3").string()), 0);
  EXPECT_EQ(cli("diagnostics --preset sphere_relax --seed 4 --quiet --out " + (dir / "d4").string()), 0);
  EXPECT_NE(slurp(dir / "d3" / "trajectory.csv"), slurp(dir / "d4" / "trajectory.csv"));
}
