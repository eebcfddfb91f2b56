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

#include "CLI11.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>

int main(int argc, char **argv)
{
  using namespace stagewise;

  CLI::App app{"Stagewise Newton solver for dynamic games with imperfect observation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (falls back to $OUT_DIR, then the config)");
  app.add_option("--seed", seed, "override the configured seed");
  app.add_option("--threads", threads, "worker threads for closed-loop rollouts (0: all cores)");
  app.add_flag("--quiet", quiet, "suppress progress output");

  for (const char *name : {"solve", "sweep", "mpc", "check", "bench"})
    app.add_subcommand(name, std::string("run the ") + name + " command");

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::CallForHelp &e)
  {
    return app.exit(e);
  }
  catch (const CLI::ParseError &e)
  {
    app.exit(e);
    return cli::kConfigError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try
  {
    config::RunConfig c = config_path.empty() ? config::RunConfig{} : config::load(config_path);
    if (seed)
      c.seed = *seed;
    if (threads)
    {
      if (*threads < 0)
        throw ConfigError("--threads must be >= 0");
      c.threads = *threads;
    }
    if (!out_dir.empty())
      c.output_dir = out_dir;
    else if (const char *env = std::getenv("OUT_DIR"); env && *env)
      c.output_dir = env;
    if (c.output_dir.empty())
      c.output_dir = "stagewise_out";
    if (quiet)
      c.solver.verbose = false;

    std::ofstream null_stream;
    std::ostream &log = quiet ? static_cast<std::ostream &>(null_stream) : std::cout;
    return cli::run_command(command, c, c.output_dir, log);
  }
  catch (const ConfigError &e)
  {
    std::cerr << "config error: " << e.what() << '\n';
    return cli::kConfigError;
  }
  catch (const std::exception &e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kConfigError;
  }
}
