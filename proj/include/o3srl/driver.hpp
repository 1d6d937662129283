#pragma once

#include "o3srl/mixture.hpp"
#include "o3srl/offline_oracle.hpp"
#include "o3srl/online_opt.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace o3srl {

enum class RunMode { general, practical, final };
enum class GridMode { uniform, adaptive };

/// How raw oracle values become EXP3 losses.
enum class LossScaling {
  /// Range of the optimal relabeled values across the grid arms, measured on
  /// the empirical model before the first round.
  value_range,
  /// A-priori range from the reward/cost bounds and C.
  instance_bound,
};

std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& s);
std::string to_string(GridMode mode);
GridMode grid_mode_from_string(const std::string& s);
std::string to_string(LossScaling scaling);
LossScaling loss_scaling_from_string(const std::string& s);

struct LambdaSettings {
  std::size_t K = 5;
  double C = 5.0;
  double eta = 2e-3;
  GridMode grid = GridMode::uniform;
  double reference_limit = 5.0;
  double alpha_shrink = 0.3;
  double mixing = 0.0;
  LossScaling scaling = LossScaling::value_range;
  /// Continuous updater step; defaults to C / (H max c_hat).
  std::optional<double> step0;
};

struct OracleSettings {
  double pessimism = 0.0;
  double noise_std = 0.0;
  /// Bellman sweeps per round in final mode.
  int M = 10;
};

struct RunConfig {
  RunMode mode = RunMode::final;
  std::size_t T = 100000;
  LambdaSettings lambda;
  OracleSettings oracle;
  /// Distinct policies kept in the returned support before thinning.
  std::size_t support_cap = 4096;
  /// Keep every iterate's actions in RunResult::iterates.
  bool store_iterates = false;
  /// True-model V_r, V_c of the iterate are logged every eval_every rounds.
  std::size_t eval_every = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TraceRow {
  std::size_t t = 0;
  /// Multiplier used to relabel in round t (lambda_{t-1}).
  double lambda = 0.0;
  /// Grid arm of `lambda`; -1 for the continuous updater.
  int arm = -1;
  double v_tilde = 0.0;
  /// True-model values of the round-t policy; NaN when not logged.
  double v_r = 0.0;
  double v_c = 0.0;
};

struct RunResult {
  RunMode mode = RunMode::general;
  PolicyMixture mixture;
  /// Returned multiplier: running mean, projected onto the grid in
  /// practical and final modes.
  double lambda_bar = 0.0;
  /// Unprojected running mean of lambda_1..lambda_T.
  double lambda_hat = 0.0;
  TabularPolicy last_policy;
  std::optional<LambdaGrid> grid;
  std::optional<LossScale> loss_scale;
  std::vector<TraceRow> trace;
  /// Per round: multiplier played and the round policy's empirical-model
  /// reward and cost values (unvisited pairs contribute zero).
  std::vector<double> played_lambda;
  std::vector<double> v_r_hat;
  std::vector<double> v_c_hat;
  std::vector<std::vector<int>> iterates;
  std::vector<BanditRecord> bandit_history;
  /// Optimal relabeled value of each grid arm on the empirical model.
  std::vector<double> arm_values;
  double wall_seconds = 0.0;
};

/// Continuous multiplier with projected online gradient steps; every round
/// calls the oracle to convergence.
RunResult run_general(const Cmdp& truth, const EmpiricalModel& model, const RunConfig& config);
/// EXP3 over a multiplier grid with a convergent oracle.
RunResult run_practical(const Cmdp& truth, const EmpiricalModel& model, const RunConfig& config);
/// EXP3 with M warm-started Bellman sweeps per round; the headline output is
/// last_policy.
RunResult run_final(const Cmdp& truth, const EmpiricalModel& model, const RunConfig& config);

/// Dispatches on config.mode.
RunResult run(const Cmdp& truth, const EmpiricalModel& model, const RunConfig& config);

/// Grid described by the settings for cost limit kappa.
LambdaGrid make_grid(const LambdaSettings& settings, double kappa);

std::string trace_to_csv(const RunResult& result);
Json run_result_to_json(const RunResult& result);

}  // namespace o3srl
