#pragma once

// Config-driven experiment runner behind the command-line tool.

#include "o3srl/driver.hpp"
#include "o3srl/exact_solver.hpp"
#include "o3srl/io.hpp"
#include "o3srl/metrics.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace o3srl {

/// Malformed or inconsistent configuration; the message names the field.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct DatasetSpec {
  int episodes = 1000;
  int horizon = 100;
  /// "uniform" or "eps_optimal" (epsilon-greedy around the unconstrained optimum).
  std::string behavior = "uniform";
  double epsilon = 0.3;
  /// Defaults to a stream derived from the master seed.
  std::optional<std::uint64_t> seed;
  std::optional<double> clip_tau;
  /// Load transitions from a CSV or JSON file instead of simulating.
  std::optional<std::string> path;
  /// Give the fitted model the true initial distribution instead of the
  /// empirical distribution of episode starts.
  bool known_initial = false;
};

struct EvalSpec {
  int episodes = 20;
  /// 0 picks gamma^h < 1e-6.
  int horizon = 0;
};

struct SweepAxes {
  std::vector<RunMode> modes;
  std::vector<std::size_t> K;
  std::vector<double> C;
  std::vector<int> M;
  /// Absolute limits, or fractions of the unconstrained policy's cost.
  std::vector<double> kappa;
  bool kappa_is_fraction = false;
  std::vector<std::size_t> T;
  std::vector<std::uint64_t> seeds;
};

struct AuditSpec {
  OracleAuditOptions oracle;
  /// Multiplier probe set; defaults to {0, C/2, C}.
  bool lambdas_given = false;
  /// Synthetic Bernoulli bandit for the regret audit; empty runs the
  /// configured instance instead.
  std::vector<double> bandit_means;
  std::size_t bandit_T = 10000;
  std::vector<std::uint64_t> bandit_seeds;
};

struct ExperimentConfig {
  /// Environment description with fixtures and files resolved.
  Json env;
  std::string env_name;
  std::optional<double> kappa;
  std::optional<double> kappa_fraction;
  DatasetSpec dataset;
  RunConfig run;
  EvalSpec eval;
  std::optional<SweepAxes> sweep;
  AuditSpec audit;
  std::string out;
  /// Directory relative paths are resolved against.
  std::string base_dir = ".";
};

/// Parses a config document. Unknown keys are rejected.
ExperimentConfig parse_config(const Json& doc, const std::string& base_dir = ".");
/// Reads and parses; JSON syntax errors carry line and column.
ExperimentConfig load_config(const std::string& path);

/// Directory holding the shipped fixtures.
std::string fixture_dir();

/// Builds the environment (without applying the config's cost limit).
Cmdp build_env(const Json& env, const std::string& base_dir = ".");
/// Cost of the unconstrained reward-optimal policy.
double unconstrained_cost(const Cmdp& cmdp);
/// build_env plus the configured cost limit.
Cmdp build_cmdp(const ExperimentConfig& config);

struct Instance {
  Cmdp truth;
  OfflineDataset data;
  EmpiricalModel model;
  double r_min = 0.0;
  double r_max = 0.0;
};

/// Truth, dataset and fitted model for one master seed.
Instance prepare_instance(const ExperimentConfig& config, const Cmdp& truth, std::uint64_t master_seed);

/// Behavior policy described by the dataset spec.
TabularPolicy behavior_policy(const Cmdp& cmdp, const DatasetSpec& spec);

struct RunReport {
  RunResult result;
  EquilibriumReport equilibrium;
  /// Scores of the headline output: the last iterate in final mode, the
  /// averaged mixture otherwise.
  std::string headline;
  double v_r = 0.0;
  double v_c = 0.0;
  NormalizedScores scores;
  NormalizedScores mixture_scores;
  EpisodeReturns returns;
};

RunReport execute_run(const ExperimentConfig& config, const Instance& instance);
Json report_to_json(const RunReport& report);

struct CommandOptions {
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  bool quiet = false;
  /// Record wall-clock runtimes in sweep.csv; off keeps output byte-stable.
  bool timing = false;
};

/// Output directory: --out, then the config, then O3SRL_OUT, then "out".
std::string resolve_out_dir(const ExperimentConfig& config, const CommandOptions& options);

int cmd_run(const ExperimentConfig& config, const CommandOptions& options, std::ostream& out);
int cmd_sweep(const ExperimentConfig& config, const CommandOptions& options, std::ostream& out);
int cmd_solve_exact(const ExperimentConfig& config, const CommandOptions& options, std::ostream& out);
int cmd_gen_env(const ExperimentConfig& config, const CommandOptions& options, std::ostream& out);
int cmd_gen_data(const ExperimentConfig& config, const CommandOptions& options, std::ostream& out);
int cmd_audit_oracle(const ExperimentConfig& config, const CommandOptions& options, std::ostream& out);
int cmd_audit_regret(const ExperimentConfig& config, const CommandOptions& options, std::ostream& out);

/// Exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInfeasible = 3;
inline constexpr int kExitBruteForceCap = 4;

/// Dispatches a command by name and maps exceptions to exit statuses,
/// printing diagnostics to `err`.
int run_command(const std::string& command, const std::string& config_path, const CommandOptions& options,
                std::ostream& out, std::ostream& err);

}  // namespace o3srl
