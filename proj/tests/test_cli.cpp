/*
 Copyright 2026 The Stagewise Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/


#include "stagewise/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace stagewise;
namespace fs = std::filesystem;

namespace
{
  fs::path scratch(const std::string &name)
  {
    const fs::path dir = fs::temp_directory_path() / "stagewise_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
  }

  config::RunConfig from(const std::string &text) { return config::parse_text(text); }

  std::string slurp(const fs::path &p)
  {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  int run_binary(const std::string &args)
  {
    const std::string cmd = std::string(STAGEWISE_CLI) + " " + args + " > /dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  }

  std::string config_path(const std::string &name) { return std::string(STAGEWISE_CONFIG_DIR) + "/" + name; }
} // namespace

TEST(Config, DefaultsAndModelSpecificDefaults)
{
  const auto q = from("{}");
  EXPECT_EQ(q.model.name, "quadrotor");
  EXPECT_EQ(q.model.T, 60);
  EXPECT_EQ(q.model.mu, 6.0);
  const auto r = from(R"({"model": {"name": "lq"}})");
  EXPECT_EQ(r.model.T, 6);
  EXPECT_EQ(r.model.t, 3);
  EXPECT_EQ(r.mpc.n_rollouts, 100);
  EXPECT_EQ(r.solver.armijo_c, 0.25);
}

TEST(Config, UnknownKeysAndBadTypesAreNamed)
{
  try
  {
    from(R"({"model": {"name": "lq", "horizon": 5}})");
    FAIL() << "expected ConfigError";
  }
  catch (const ConfigError &e)
  {
    EXPECT_NE(std::string(e.what()).find("model.horizon"), std::string::npos) << e.what();
  }
  try
  {
    from(R"({"solver": {"max_iters": "many"}})");
    FAIL() << "expected ConfigError";
  }
  catch (const ConfigError &e)
  {
    EXPECT_NE(std::string(e.what()).find("solver.max_iters"), std::string::npos) << e.what();
  }
  EXPECT_THROW(from(R"({"model": {"name": "pendulum"}})"), ConfigError);
  EXPECT_THROW(from(R"({"bogus": 1})"), ConfigError);
}

TEST(Config, ParseErrorsReportTheLine)
{
  try
  {
    from("{\n  \"seed\": 1,\n  \"model\": {\n}");
    FAIL() << "expected ConfigError";
  }
  catch (const ConfigError &e)
  {
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos) << e.what();
  }
}

TEST(Config, MatrixShorthands)
{
  const auto c = from(R"({"model": {"P": {"scaled_identity": {"n": 6, "s": 2e-5}},
                                     "R": {"diag": [1, 2, 3]},
                                     "Q": [[1, 0, 0, 0, 0, 0], [0, 1, 0, 0, 0, 0], [0, 0, 1, 0, 0, 0],
                                           [0, 0, 0, 1, 0, 0], [0, 0, 0, 0, 1, 0], [0, 0, 0, 0, 0, 1]]}})");
  EXPECT_EQ(c.model.weights.prior, 2e-5 * Matrix::Identity(6, 6));
  EXPECT_EQ(c.model.weights.measurement, Vector((Vector(3) << 1, 2, 3).finished()).asDiagonal().toDenseMatrix());
  EXPECT_EQ(c.model.weights.process, Matrix::Identity(6, 6));
  EXPECT_THROW(from(R"({"model": {"R": [[1, 2], [3]]}})"), ConfigError);
}

TEST(Config, ResolvedConfigRoundTrips)
{
  const auto c = from(R"({"model": {"name": "random_smooth", "nx": 4, "T": 9}, "seed": 5,
                          "bench": {"horizons": [10, 20]}})");
  const auto back = config::parse(config::to_json(c));
  EXPECT_EQ(config::to_json(back).dump(), config::to_json(c).dump());
  EXPECT_EQ(back.model.nx, 4);
  EXPECT_EQ(back.bench.horizons, (std::vector<int>{10, 20}));
}

TEST(Commands, LinearQuadraticSolveTakesOneStep)
{
  const fs::path out = scratch("lq_solve");
  std::ostringstream log;
  const auto c = config::load(config_path("lq_solve.json"));
  ASSERT_EQ(cli::cmd_solve(c, out, log), cli::kOk) << log.str();
  const auto summary = config::json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(summary["status"], "converged");
  EXPECT_EQ(summary["accepted_steps"], 1);
  EXPECT_TRUE(fs::exists(out / "trace.csv"));
  EXPECT_TRUE(fs::exists(out / "trajectory.csv"));
  EXPECT_TRUE(fs::exists(out / "resolved_config.json"));
}

TEST(Commands, CheckPassesOnRandomInstancesAndAtTheEdges)
{
  std::ostringstream log;
  auto c = config::load(config_path("check_random_smooth.json"));
  const fs::path out = scratch("check");
  EXPECT_EQ(cli::cmd_check(c, out, log), cli::kOk) << log.str();
  const auto report = config::json::parse(slurp(out / "check_report.json"));
  EXPECT_EQ(report["failures"], 0);
  for (int t : {0, 6})
  {
    c.model.t = t;
    EXPECT_EQ(cli::cmd_check(c, scratch("check_edge"), log), cli::kOk) << "t = " << t << '\n' << log.str();
  }
}

TEST(Commands, CheckFlagsCorruptedJacobian)
{
  std::ostringstream log;
  auto c = config::load(config_path("check_random_smooth.json"));
  c.check.corrupt_jacobian = true;
  EXPECT_EQ(cli::cmd_check(c, scratch("check_corrupt"), log), cli::kCheckFailed);
  EXPECT_NE(log.str().find("exceeds its tolerance"), std::string::npos) << log.str();
}

TEST(Commands, SingleHorizonBenchHasNoSlope)
{
  std::ostringstream log;
  auto c = from(R"({"model": {"name": "lq", "nx": 3, "nu": 2, "ny": 2, "t": 2}, "bench": {"horizons": [20], "reps": 3}})");
  const fs::path out = scratch("bench_single");
  ASSERT_EQ(cli::cmd_bench(c, out, log), cli::kOk);
  const auto summary = config::json::parse(slurp(out / "bench_summary.json"));
  EXPECT_FALSE(summary.contains("slope"));
  EXPECT_EQ(summary["median_ns"].size(), 1u);
}

TEST(Commands, SweepRecordsBreakdown)
{
  std::ostringstream log;
  const fs::path out = scratch("sweep");
  const auto c = config::load(config_path("quadrotor_sweep_breakdown.json"));
  ASSERT_EQ(cli::cmd_sweep(c, out, log), cli::kOk) << log.str();
  const std::string table = slurp(out / "sweep_summary.csv");
  EXPECT_NE(table.find("degenerate"), std::string::npos) << table;
  EXPECT_TRUE(fs::exists(out / "path_mu_6.csv"));
}

TEST(Binary, ExitCodes)
{
  const fs::path out = scratch("binary");
  EXPECT_EQ(run_binary("solve --config " + config_path("lq_solve.json") + " --out " + out.string()), 0);
  EXPECT_EQ(run_binary("solve --config /nonexistent.json --out " + out.string()), 1);

  const fs::path bad = out / "bad.json";
  std::ofstream(bad) << R"({"model": {"name": "lq", "unknown": 1}})";
  EXPECT_EQ(run_binary("solve --config " + bad.string() + " --out " + out.string()), 1);

  const fs::path degenerate = out / "degenerate.json";
  std::ofstream(degenerate) << R"({"model": {"name": "quadrotor", "mu": 80}})";
  EXPECT_EQ(run_binary("solve --config " + degenerate.string() + " --out " + out.string()), 2);

  const fs::path budget = out / "budget.json";
  std::ofstream(budget) << R"({"model": {"name": "quadrotor"}, "solver": {"max_iters": 1}})";
  EXPECT_EQ(run_binary("solve --config " + budget.string() + " --out " + out.string()), 5);
}

TEST(Binary, MpcOutputIsReproducible)
{
  const fs::path cfg = scratch("mpc_cfg") / "mpc.json";
  std::ofstream(cfg) << R"({"model": {"name": "quadrotor", "T": 15}, "seed": 3,
                            "mpc": {"n_rollouts": 3, "controllers": ["game"]}})";
  const fs::path a = scratch("mpc_a"), b = scratch("mpc_b");
  ASSERT_EQ(run_binary("mpc --config " + cfg.string() + " --out " + a.string()), 0);
  ASSERT_EQ(run_binary("mpc --threads 2 --config " + cfg.string() + " --out " + b.string()), 0);
  for (const char *f : {"mpc_game_timestep.csv", "mpc_game_rollouts.csv"})
  {
    const std::string x = slurp(a / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, slurp(b / f)) << f;
  }
}
