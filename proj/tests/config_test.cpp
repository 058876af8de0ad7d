#include "coco/coco.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace coco;
namespace fs = std::filesystem;

namespace {

const std::string quadratic_path = std::string(COCO_CONFIG_DIR) + "/quadratic_b23.json";
const std::string aggregate_path = std::string(COCO_CONFIG_DIR) + "/aggregate_n3_d2.json";

std::string first_message(const std::vector<std::string>& overrides) {
  try {
    load_experiment_config(quadratic_path, overrides);
  } catch (const ConfigError& e) {
    return e.diagnostics().at(0).message;
  }
  return {};
}

struct CliResult {
  int status = -1;
  std::string out;
};

CliResult cli(const std::string& args) {
  const std::string cmd = std::string(COCO_CLI_PATH) + " " + args + " 2>&1";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("coco_config_test_" + name);
  fs::remove_all(p);
  return p;
}

} // namespace

TEST(Config, BundledConfigsAreValid) {
  EXPECT_TRUE(validate_config(quadratic_path).empty());
  EXPECT_TRUE(validate_config(aggregate_path).empty());
  const auto cfg = load_experiment_config(quadratic_path);
  EXPECT_EQ(cfg.runs, 200u);
  EXPECT_EQ(cfg.run.horizon, 100'000u);
  EXPECT_EQ(cfg.run.schedule.exponent(), Rational(2, 3));
  EXPECT_EQ(cfg.run.schedule.T0(), 3.0);
  EXPECT_EQ(cfg.fit_window().t_min, 1000u);
  EXPECT_EQ(cfg.fit_window().t_max, 100'000u);
}

TEST(Config, DefaultOffsetIsSmallestAdmissibleInteger) {
  const auto cfg = load_experiment_config(aggregate_path);
  EXPECT_EQ(cfg.run.schedule.T0(), 6.0);
  EXPECT_EQ(cfg.run.game.kind(), GameKind::AggregatePotential);
}

TEST(Config, InadmissibleOffsetIsReported) {
  EXPECT_NE(first_message({"stepsize.T0=1"}).find("T0 below admissible minimum 2.8284"), std::string::npos);
}

TEST(Config, IndefiniteMatrixIsReported) {
  EXPECT_NE(first_message({"game.Q=[[0.1,0],[0,-1]]"}).find("not negative semidefinite"), std::string::npos);
}

TEST(Config, ExponentOutOfRangeIsReported) {
  const std::string msg = first_message({"stepsize.b=0.4"});
  EXPECT_NE(msg.find("(0.5, 1)"), std::string::npos) << msg;
}

TEST(Config, DiagnosticsCarryLineNumbers) {
  const std::string text = read_text_file(quadratic_path);
  std::string bad = text;
  bad.replace(bad.find("\"sigma\": 1.0"), 12, "\"sigma\": -1.0");
  try {
    parse_experiment_config(bad);
    FAIL();
  } catch (const ConfigError& e) {
    ASSERT_EQ(e.diagnostics().size(), 1u);
    EXPECT_EQ(e.diagnostics()[0].path, "noise");
    EXPECT_EQ(e.diagnostics()[0].line, 8);
  }
  try {
    parse_experiment_config("{\n  \"game\": [1,\n}");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.diagnostics()[0].line, 3);
  }
}

TEST(Config, MultipleProblemsAreAllListed) {
  try {
    load_experiment_config(quadratic_path, {"noise.sigma=-1", "x0=[1]", "runs=0"});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.diagnostics().size(), 3u);
  }
}

TEST(Config, JsonRoundTripIsLossless) {
  for (const auto& path : {quadratic_path, aggregate_path}) {
    const auto cfg = load_experiment_config(path);
    const json once = to_json(cfg);
    const auto back = experiment_from_json(once);
    EXPECT_EQ(to_json(back), once);
    EXPECT_EQ(back.run.schedule.exponent(), cfg.run.schedule.exponent());
    EXPECT_EQ(back.run.x0, cfg.run.x0);
    EXPECT_EQ(back.run.checkpoints, cfg.run.checkpoints);
    EXPECT_EQ(back.run.game.lambda(), cfg.run.game.lambda());
  }
}

TEST(Config, OverridesReachNestedKeys) {
  const auto cfg =
      load_experiment_config(quadratic_path, {"noise.sigma=0.25", "stepsize.b=[3,4]", "stepsize.T0=null",
                                              "output_dir=elsewhere", "runs=3"});
  EXPECT_EQ(cfg.run.noise.sigma, 0.25);
  EXPECT_EQ(cfg.run.schedule.exponent(), Rational(3, 4));
  EXPECT_EQ(cfg.run.schedule.T0(), std::ceil(min_T0(0.5, 0.75)));
  EXPECT_EQ(cfg.output_dir, "elsewhere");
  EXPECT_EQ(cfg.runs, 3u);
  EXPECT_THROW(load_experiment_config(quadratic_path, {"novalue"}), ConfigError);
}

TEST(Config, SeedsDeriveFromBase) {
  auto cfg = load_experiment_config(quadratic_path, {"base_seed=40"});
  EXPECT_EQ(cfg.run_for(0).seed, 40u);
  EXPECT_EQ(cfg.run_for(7).seed, 47u);
}

TEST(Cli, EquilibriumRunProducesZeros) {
  const fs::path out = scratch("zero");
  const auto r = cli("run " + quadratic_path +
                     " --override runs=1 --override noise.sigma=0 --override x0=[1,-1] --override horizon=1000"
                     " --out " + out.string());
  ASSERT_EQ(r.status, 0) << r.out;
  for (const char* f : {"config_resolved.json", "constants.json", "ensemble.csv", "bound_report.json",
                        "rate_fit.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  std::ifstream csv(out / "ensemble.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, ensemble_csv_header);
  EXPECT_EQ(line, "t,mean_residual_sq,se_residual_sq,mean_shadow_residual_sq,se_shadow,mean_U_norm_sq,se_U,"
                  "mean_dist_xstar_sq,se_dist,time_avg_residual,theory_bound_last_iterate,"
                  "theory_bound_time_avg");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    for (int col = 1; col <= 9; ++col) {
      std::getline(ss, cell, ',');
      EXPECT_LE(std::abs(std::stod(cell)), 1e-30) << line;
    }
  }
  EXPECT_EQ(rows, static_cast<int>(default_checkpoints(1000).size()));
  fs::remove_all(out);
}

TEST(Cli, InvalidConfigExitsWithTwo) {
  const auto r = cli("run " + quadratic_path + " --override stepsize.b=0.4 --out " + scratch("bad").string());
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.out.find("(0.5, 1)"), std::string::npos) << r.out;
  EXPECT_EQ(cli("validate " + quadratic_path).status, 0);
  EXPECT_EQ(cli("run /nonexistent/config.json").status, 4);
}

TEST(Cli, DivergenceExitsWithThree) {
  const auto r = cli("run " + quadratic_path +
                     " --override runs=2 --override noise.sigma=1e7 --override horizon=1000 --out " +
                     scratch("div").string());
  EXPECT_EQ(r.status, 3) << r.out;
  EXPECT_NE(r.out.find("seed"), std::string::npos);
}

TEST(Cli, ConstantsSubcommand) {
  const auto r = cli("constants " + quadratic_path);
  ASSERT_EQ(r.status, 0) << r.out;
  const json j = json::parse(r.out);
  EXPECT_NEAR(j.at("Gamma1").get<double>(), 403.05666667102834, 1e-9);
  EXPECT_EQ(j.at("regime"), "critical");
}

TEST(Cli, TrajectoriesOnRequest) {
  const fs::path out = scratch("traj");
  const auto r = cli("run " + quadratic_path +
                     " --override runs=2 --override horizon=100 --override 'emit=[\"trajectories\",\"ensemble\"]'"
                     " --out " + out.string());
  EXPECT_LE(r.status, 1) << r.out;
  EXPECT_TRUE(fs::exists(out / "trajectories" / "seed_0.csv"));
  EXPECT_TRUE(fs::exists(out / "trajectories" / "seed_1.csv"));
  EXPECT_FALSE(fs::exists(out / "constants.json"));
  fs::remove_all(out);
}
