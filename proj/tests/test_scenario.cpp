#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hjminmax/scenario.hpp"

using namespace hjminmax;
namespace fs = std::filesystem;

namespace {

Json minimal() {
  return Json::parse(R"({
    "name": "demo",
    "hamiltonian": {"expr": "p^2/2", "c_H_bound": 1, "flags": {"p_only": true, "convex_in_p": true}},
    "initial_datum": {"breakpoints": [0], "pieces": [{"at": 0, "value": 0, "slope": 1}, "-x"]},
    "horizon": 1,
    "x_domain": [-1, 1],
    "grids": {"n_x": 21, "fiber_M": 65, "fd_dx": 0.005},
    "schedules": [1, 2, 4],
    "targets": {"convergence_sup_error": 0.05}
  })");
}

std::string config_error(const Json& j) {
  try {
    parse_scenario(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("hjminmax_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(HJ_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string scenario_file(const std::string& name) { return std::string(HJ_SCENARIO_DIR) + "/" + name + ".json"; }

}  // namespace

TEST(Parse, MinimalScenario) {
  const Scenario sc = parse_scenario(minimal());
  EXPECT_EQ(sc.name, "demo");
  EXPECT_TRUE(sc.model.convex_in_p());
  EXPECT_DOUBLE_EQ(sc.v(-0.5), -0.5);
  EXPECT_DOUBLE_EQ(sc.v.lipschitz_bound(), 1.0);
  EXPECT_DOUBLE_EQ(sc.pad, 1.0);
  EXPECT_EQ(sc.grids.fiber_M, 65);
  EXPECT_EQ(sc.grids.cfl, 0.9);
}

TEST(Parse, ErrorsNameTheField) {
  auto j = minimal();
  j["hamiltonian"].erase("expr");
  EXPECT_NE(config_error(j).find("hamiltonian.expr: missing"), std::string::npos);

  j = minimal();
  j["hamiltonian"]["expr"] = "p^";
  EXPECT_NE(config_error(j).find("hamiltonian.expr"), std::string::npos);

  j = minimal();
  j["initial_datum"]["pieces"][1] = "-x+zz";
  EXPECT_NE(config_error(j).find("initial_datum.pieces[1]"), std::string::npos);

  j = minimal();
  j["grids"]["cfl"] = 1.5;
  EXPECT_NE(config_error(j).find("grids.cfl"), std::string::npos);

  j = minimal();
  j["horizon"] = "long";
  EXPECT_NE(config_error(j).find("horizon: wrong type"), std::string::npos);

  j = minimal();
  j["x_domain"] = {1, -1};
  EXPECT_NE(config_error(j).find("x_domain"), std::string::npos);

  j = minimal();
  j["initial_datum"]["pieces"][1] = "1-x";
  EXPECT_NE(config_error(j).find("discontinuity"), std::string::npos);
}

TEST(Parse, FlagsAreVerified) {
  auto j = minimal();
  j["hamiltonian"]["expr"] = "-p^2/2";
  EXPECT_NE(config_error(j).find("hamiltonian.flags.convex_in_p"), std::string::npos);

  j = minimal();
  j["hamiltonian"]["expr"] = "x*p";
  EXPECT_NE(config_error(j).find("hamiltonian.flags.p_only"), std::string::npos);

  j = minimal();
  j["hamiltonian"]["c_H_bound"] = 0.5;
  EXPECT_FALSE(config_error(j).empty());

  j = minimal();
  j["initial_datum"]["lipschitz_bound"] = 0.5;
  EXPECT_NE(config_error(j).find("initial_datum.lipschitz_bound"), std::string::npos);
}

TEST(Output, CsvFormat) {
  SolutionField f;
  f.scheme = "iterated(2)";
  f.times = {0.0, 0.5};
  f.x_grid = {-1.0, 1.0 / 3.0};
  f.u = {{1.0, 2.0}, {0.1, 1e-20}};
  EXPECT_EQ(field_csv(f),
            "t,x,u,scheme\n0,-1,1,iterated(2)\n0,0.333333333333,2,iterated(2)\n0.5,-1,0.1,iterated(2)\n"
            "0.5,0.333333333333,1e-20,iterated(2)\n");
}

TEST(Output, AtomicWriteLeavesNoTemporary) {
  const fs::path d = scratch("atomic");
  write_atomic(d / "sub" / "a.txt", "hello\n");
  write_atomic(d / "sub" / "a.txt", "again\n");
  EXPECT_EQ(slurp(d / "sub" / "a.txt"), "again\n");
  EXPECT_FALSE(fs::exists(d / "sub" / "a.txt.tmp"));
}

TEST(Commands, StudyNeedsThreeSchedules) {
  auto j = minimal();
  j["schedules"] = {1, 2};
  EXPECT_THROW(cmd_study(parse_scenario(j), scratch("study2")), ConfigError);
}

TEST(Commands, PerturbedDatumAddsBump) {
  const Scenario sc = parse_scenario(minimal());
  const auto w = perturbed(sc.v, "0.01*exp(-8*x^2)");
  for (double x : {-0.7, 0.0, 0.4}) EXPECT_NEAR(w(x) - sc.v(x), 0.01 * std::exp(-8 * x * x), 1e-12);
}

TEST(Commands, ConvexCheckPasses) {
  const auto o = run_check(parse_scenario(minimal()));
  EXPECT_TRUE(o.pass) << o.report.dump(2);
  EXPECT_EQ(o.report["semigroup"]["flag"], "SEMIGROUP_WITHIN_TOLERANCE");
  EXPECT_EQ(o.report["stability"]["probes"], 50);
}

TEST(Cli, ExitCodes) {
  const fs::path d = scratch("cli");
  EXPECT_EQ(cli("solve " + scenario_file("plane_wave") + " --scheme fd --out " + d.string()), 0);
  EXPECT_TRUE(fs::exists(d / "plane_wave_fd.csv"));
  EXPECT_EQ(slurp(d / "plane_wave_fd.csv").substr(0, 13), "t,x,u,scheme\n");
  EXPECT_EQ(cli("solve " + scenario_file("plane_wave") + " --scheme min --out " + d.string()), 2);
  EXPECT_EQ(cli("solve " + scenario_file("plane_wave") + " --scheme bogus --out " + d.string()), 2);
  EXPECT_EQ(cli("solve /nonexistent.json"), 2);
  EXPECT_EQ(cli("explode " + scenario_file("plane_wave")), 2);
  EXPECT_EQ(cli(""), 2);
  std::ofstream(d / "bad.json") << "{ not json";
  EXPECT_EQ(cli("check " + (d / "bad.json").string()), 2);
}

TEST(Cli, SolveWritesManifestWithMesh) {
  const fs::path d = scratch("manifest");
  ASSERT_EQ(cli("solve " + scenario_file("plane_wave") + " --scheme iterated:4 --out " + d.string()), 0);
  const Json m = Json::parse(slurp(d / "plane_wave_iterated_4_manifest.json"));
  EXPECT_DOUBLE_EQ(m["schedule"]["mesh"].get<double>(), 0.125);
  EXPECT_EQ(m["selector"]["warnings"], 0);
  EXPECT_TRUE(m["scenario"]["grids"].contains("fiber_M"));
  EXPECT_TRUE(m["lipschitz"]["pass_space"].get<bool>());
}

TEST(Cli, MinOracleAgreesWithFd) {
  const fs::path d = scratch("min");
  ASSERT_EQ(cli("solve " + scenario_file("convex_rarefaction") + " --scheme min --out " + d.string()), 0);
  const Json m = Json::parse(slurp(d / "convex_rarefaction_min_manifest.json"));
  EXPECT_TRUE(m["fd_agreement"]["agrees"].get<bool>());
}

TEST(Cli, FrontAtZeroIsDatum) {
  const fs::path d = scratch("front0");
  ASSERT_EQ(cli("front " + scenario_file("zero_hamiltonian") + " --t 0 --out " + d.string()), 0);
  std::ifstream in(d / "zero_hamiltonian_front_t0.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "x,u,branch_id,from_kink");
  const Scenario sc = load_scenario(scenario_file("zero_hamiltonian"));
  int rows = 0;
  while (std::getline(in, line)) {
    double x = 0, u = 0;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf", &x, &u), 2);
    EXPECT_NEAR(u, sc.v(x), 1e-11);
    ++rows;
  }
  EXPECT_EQ(rows, sc.grids.n_x);
}

TEST(Cli, PlaneWaveFrontIsTheSection) {
  const fs::path d = scratch("frontpw");
  ASSERT_EQ(cli("front " + scenario_file("plane_wave") + " --t 0.5 --out " + d.string()), 0);
  std::ifstream f(d / "plane_wave_front_t0.5.csv"), s(d / "plane_wave_section_t0.5.csv");
  std::string a, b;
  std::getline(f, a);
  std::getline(s, b);
  int rows = 0;
  while (std::getline(f, a) && std::getline(s, b)) {
    double xa, ua, xb, ub;
    int br, fk;
    ASSERT_EQ(std::sscanf(a.c_str(), "%lf,%lf,%d,%d", &xa, &ua, &br, &fk), 4);
    ASSERT_EQ(std::sscanf(b.c_str(), "%lf,%lf", &xb, &ub), 2);
    EXPECT_EQ(xa, xb);
    EXPECT_NEAR(ua, ub, 1e-9);
    EXPECT_EQ(fk, 0);
    ++rows;
  }
  EXPECT_EQ(rows, 41);
}

TEST(Cli, KinkedFrontHasFanBranch) {
  const fs::path d = scratch("frontB");
  ASSERT_EQ(cli("front " + scenario_file("appendixB") + " --t 0.05 --out " + d.string()), 0);
  const std::string csv = slurp(d / "appendixB_front_t0.05.csv");
  EXPECT_NE(csv.find(",1\n"), std::string::npos);
  EXPECT_NE(csv.find(",0\n"), std::string::npos);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const fs::path a = scratch("detA"), b = scratch("detB");
  for (const auto& d : {a, b}) {
    ASSERT_EQ(cli("study " + scenario_file("convex_rarefaction") + " --out " + d.string()), 0);
    ASSERT_EQ(cli("solve " + scenario_file("convex_rarefaction") + " --scheme iterated:2 --out " + d.string()), 0);
  }
  for (const char* f : {"convex_rarefaction_study.json", "convex_rarefaction_iterated_2.csv",
                        "convex_rarefaction_iterated_2_manifest.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Cli, ThreadCountDoesNotChangeOutput) {
  const fs::path a = scratch("thrA"), b = scratch("thrB");
  ASSERT_EQ(cli("solve " + scenario_file("appendixB") + " --scheme minmax --out " + a.string()), 0);
  ASSERT_EQ(std::system(("HJ_THREADS=1 " + std::string(HJ_CLI_PATH) + " solve " + scenario_file("appendixB") +
                         " --scheme minmax --out " + b.string() + " >/dev/null 2>&1")
                            .c_str()),
            0);
  EXPECT_EQ(slurp(a / "appendixB_minmax.csv"), slurp(b / "appendixB_minmax.csv"));
}
