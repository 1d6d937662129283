#pragma once

#include "o3srl/io.hpp"
#include "o3srl/lagrangian.hpp"
#include "o3srl/offline_data.hpp"
#include "o3srl/online_opt.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace o3srl {

/// Multiplier domain for certification: the interval [0, C], or a grid.
struct LambdaDomain {
  double C = 5.0;
  std::optional<LambdaGrid> grid;

  static LambdaDomain interval(double C) { return LambdaDomain{C, std::nullopt}; }
  static LambdaDomain on_grid(const LambdaGrid& g) { return LambdaDomain{g.upper(), g}; }
};

struct EquilibriumReport {
  /// max_D L(D, lambda_bar) - L(D_bar, lambda_bar).
  double gap_policy_side = 0.0;
  /// L(D_bar, lambda_bar) - min_lambda L(D_bar, lambda).
  double gap_lambda_side = 0.0;
  double epsilon = 0.0;
  double lambda_bar = 0.0;
  double value_reward = 0.0;
  double value_cost = 0.0;
  /// |lambda_bar (V_c - kappa)|.
  double kkt_residual = 0.0;
  bool on_grid = false;
};

/// Exact two-sided gap on the true model. The policy side is a single greedy
/// solve (the max over mixtures is attained by a deterministic policy); the
/// multiplier side uses that L(D_bar, .) is affine.
EquilibriumReport equilibrium_gap(const Cmdp& cmdp, const PolicyMixture& mixture, double lambda_bar,
                                  const LambdaDomain& domain);

struct NormalizedScores {
  double r_min = 0.0;
  double r_max = 0.0;
  double reward = 0.0;
  double cost = 0.0;
  bool safe = false;
};

/// (R - r_min) / (r_max - r_min) and C / kappa; safe iff the latter is <= 1.
NormalizedScores normalized_scores(double reward, double cost, double r_min, double r_max, double kappa);

/// Values of the worst and best unconstrained policies.
std::pair<double, double> reward_bounds(const Cmdp& cmdp);

struct EpisodeReturns {
  double mean_reward = 0.0;
  double mean_cost = 0.0;
  double se_reward = 0.0;
  double se_cost = 0.0;
  int episodes = 0;
};

/// Monte-Carlo discounted returns; horizon <= 0 picks gamma^h < 1e-6.
EpisodeReturns episode_returns(const Cmdp& cmdp, const TabularPolicy& policy, int num_episodes, int horizon,
                               std::uint64_t seed);
/// Mixture version: a support policy is drawn per episode by weight.
EpisodeReturns episode_returns(const Cmdp& cmdp, const PolicyMixture& mixture, int num_episodes, int horizon,
                               std::uint64_t seed);

struct OracleAuditRow {
  std::size_t n = 0;
  double lambda = 0.0;
  double median = 0.0;
  std::vector<double> per_seed;
};

struct OracleAuditOptions {
  std::vector<std::size_t> sizes{1000, 10000, 100000};
  std::vector<double> lambdas{0.0, 2.5, 5.0};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  int horizon = 100;
  double pessimism = 0.0;
};

/// Suboptimality V*_f - V^pi_f on the true model of the oracle policy fitted on
/// fresh uniform-behavior data, for f = r - lambda (c - (1 - gamma) kappa).
std::vector<OracleAuditRow> oracle_audit(const Cmdp& cmdp, const OracleAuditOptions& options);

/// Single-draw suboptimality for one dataset and multiplier.
double oracle_suboptimality(const Cmdp& cmdp, const OfflineDataset& dataset, double lambda, double pessimism = 0.0);

struct RegretAudit {
  double regret = 0.0;
  double bound = 0.0;
  std::size_t rounds = 0;
};

/// sum_t loss_t(chosen_t) - min_k sum_t loss_t(k), against sqrt(2 T K ln K).
/// `losses` is T x K.
RegretAudit exp3_regret_audit(const std::vector<std::size_t>& chosen, const Eigen::MatrixXd& losses);

/// Regret of a multiplier sequence against the best fixed multiplier in the
/// domain, for losses L_t(lambda) = v_r[t] - lambda (v_c[t] - kappa).
double lambda_regret(const std::vector<double>& played, const std::vector<double>& v_r, const std::vector<double>& v_c,
                     double kappa, const LambdaDomain& domain);

Json to_json(const EquilibriumReport& report);
Json to_json(const NormalizedScores& scores);
Json to_json(const EpisodeReturns& returns);

}  // namespace o3srl
