#include "o3srl/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Offline safe RL via no-regret multiplier learning on tabular CMDPs"};
  app.set_version_flag("--version", "o3srl 0.1.0");

  std::string command;
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  o3srl::CommandOptions options;

  app.add_option("command", command, "run | sweep | solve-exact | gen-env | gen-data | audit-oracle | audit-regret")
      ->required()
      ->check(CLI::IsMember({"run", "sweep", "solve-exact", "gen-env", "gen-data", "audit-oracle", "audit-regret"}));
  app.add_option("--config,-c", config, "Experiment config (JSON)")->required();
  auto* out_opt = app.add_option("--out,-o", out, "Output directory (default: config, then $O3SRL_OUT, then ./out)");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed, overriding run.seed");
  app.add_option("--jobs,-j", options.jobs, "Parallel sweep cells")->check(CLI::PositiveNumber);
  app.add_flag("--quiet,-q", options.quiet, "Only print the result line");
  app.add_flag("--timing", options.timing, "Record wall-clock runtimes in sweep.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : o3srl::kExitConfig;
  }
  if (*out_opt) options.out = out;
  if (*seed_opt) options.seed = seed;
  return o3srl::run_command(command, config, options, std::cout, std::cerr);
}
