#include "o3srl/metrics.hpp"

#include "o3srl/offline_data.hpp"
#include "o3srl/offline_oracle.hpp"
#include "o3srl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace o3srl {

EquilibriumReport equilibrium_gap(const Cmdp& cmdp, const PolicyMixture& mixture, double lambda_bar,
                                  const LambdaDomain& domain) {
  if (!(lambda_bar >= 0.0) || lambda_bar > domain.C + 1e-12) throw ValidationError("equilibrium gap: lambda outside the domain");
  const double kappa = cmdp.cost_limit;
  EquilibriumReport r;
  r.lambda_bar = lambda_bar;
  r.on_grid = domain.grid.has_value();
  r.value_reward = mixture.value(cmdp, cmdp.reward);
  r.value_cost = mixture.value(cmdp, cmdp.cost);
  const auto at = [&](double lambda) { return r.value_reward - lambda * (r.value_cost - kappa); };
  const double here = at(lambda_bar);

  r.gap_policy_side = value_iteration(cmdp, relabeled_signal(cmdp, lambda_bar)).value - here;

  double lowest = std::min(at(0.0), at(domain.C));
  if (domain.grid) {
    lowest = std::numeric_limits<double>::infinity();
    for (double lambda : domain.grid->values()) lowest = std::min(lowest, at(lambda));
  }
  r.gap_lambda_side = here - lowest;
  r.epsilon = std::max(r.gap_policy_side, r.gap_lambda_side);
  r.kkt_residual = std::abs(lambda_bar * (r.value_cost - kappa));
  return r;
}

NormalizedScores normalized_scores(double reward, double cost, double r_min, double r_max, double kappa) {
  if (!(r_max > r_min)) throw ValidationError("normalized scores: r_max must exceed r_min");
  if (!(kappa > 0.0)) throw ValidationError("normalized scores: kappa must be positive");
  NormalizedScores s;
  s.r_min = r_min;
  s.r_max = r_max;
  s.reward = (reward - r_min) / (r_max - r_min);
  s.cost = cost / kappa;
  s.safe = s.cost <= 1.0;
  return s;
}

std::pair<double, double> reward_bounds(const Cmdp& cmdp) {
  const Eigen::MatrixXd negated = -cmdp.reward;
  return {0.0 - value_iteration(cmdp, negated).value, value_iteration(cmdp, cmdp.reward).value};
}

namespace {

struct Moments {
  int n = 0;
  double mu = 0.0;
  double m2 = 0.0;
  void add(double x) {
    ++n;
    const double delta = x - mu;
    mu += delta / n;
    m2 += delta * (x - mu);
  }
  double mean() const { return mu; }
  double standard_error() const { return n < 2 ? 0.0 : std::sqrt(m2 / (n - 1) / n); }
};

template <typename PickPolicy>
EpisodeReturns simulate(const Cmdp& cmdp, int num_episodes, int horizon, std::uint64_t seed, PickPolicy&& pick) {
  if (num_episodes < 1) throw ValidationError("episode returns: at least one episode required");
  if (horizon <= 0) horizon = default_horizon(cmdp.gamma);
  Rng rng(seed);
  Moments reward;
  Moments cost;
  for (int ep = 0; ep < num_episodes; ++ep) {
    const TabularPolicy& policy = pick(rng);
    auto s = static_cast<Index>(rng.categorical(cmdp.initial_dist));
    double discount = 1.0;
    double ret = 0.0;
    double ret_cost = 0.0;
    for (int h = 0; h < horizon; ++h) {
      const auto a = static_cast<Index>(rng.categorical(policy.action_probs.row(s)));
      ret += discount * cmdp.reward(s, a);
      ret_cost += discount * cmdp.cost(s, a);
      discount *= cmdp.gamma;
      s = static_cast<Index>(rng.categorical(cmdp.transition[static_cast<std::size_t>(a)].row(s)));
    }
    reward.add(ret);
    cost.add(ret_cost);
  }
  EpisodeReturns out;
  out.episodes = num_episodes;
  out.mean_reward = reward.mean();
  out.mean_cost = cost.mean();
  out.se_reward = reward.standard_error();
  out.se_cost = cost.standard_error();
  return out;
}

}  // namespace

EpisodeReturns episode_returns(const Cmdp& cmdp, const TabularPolicy& policy, int num_episodes, int horizon,
                               std::uint64_t seed) {
  policy.validate_for(cmdp);
  return simulate(cmdp, num_episodes, horizon, seed, [&](Rng&) -> const TabularPolicy& { return policy; });
}

EpisodeReturns episode_returns(const Cmdp& cmdp, const PolicyMixture& mixture, int num_episodes, int horizon,
                               std::uint64_t seed) {
  if (mixture.support.empty()) throw ValidationError("episode returns: mixture has no support to sample");
  Eigen::VectorXd weights(static_cast<Index>(mixture.support.size()));
  for (std::size_t i = 0; i < mixture.support.size(); ++i) weights(static_cast<Index>(i)) = mixture.support[i].second;
  weights /= weights.sum();
  return simulate(cmdp, num_episodes, horizon, seed,
                  [&](Rng& rng) -> const TabularPolicy& { return mixture.support[rng.categorical(weights)].first; });
}

double oracle_suboptimality(const Cmdp& cmdp, const OfflineDataset& dataset, double lambda, double pessimism) {
  const EmpiricalModel model =
      fit_empirical_mdp(dataset, cmdp.num_states(), cmdp.num_actions(), cmdp.gamma, cmdp.cost_limit, pessimism);
  const OracleOutput out = oracle_solve(model, model.relabeled_signal(lambda));
  const Eigen::MatrixXd f = relabeled_signal(cmdp, lambda);
  return value_iteration(cmdp, f).value - policy_evaluation(cmdp, out.policy, f);
}

std::vector<OracleAuditRow> oracle_audit(const Cmdp& cmdp, const OracleAuditOptions& options) {
  const TabularPolicy behavior = TabularPolicy::uniform(cmdp.num_states(), cmdp.num_actions());
  std::vector<OracleAuditRow> rows;
  for (std::size_t n : options.sizes) {
    const int episodes = static_cast<int>(std::max<std::size_t>(1, n / static_cast<std::size_t>(options.horizon)));
    std::vector<std::vector<double>> per_lambda(options.lambdas.size());
    for (std::uint64_t seed : options.seeds) {
      const OfflineDataset data =
          rollout_dataset(cmdp, behavior, episodes, options.horizon, derive_seed(seed, Stream::dataset, n), "uniform");
      for (std::size_t i = 0; i < options.lambdas.size(); ++i) {
        per_lambda[i].push_back(oracle_suboptimality(cmdp, data, options.lambdas[i], options.pessimism));
      }
    }
    for (std::size_t i = 0; i < options.lambdas.size(); ++i) {
      OracleAuditRow row;
      row.n = n;
      row.lambda = options.lambdas[i];
      row.per_seed = per_lambda[i];
      std::vector<double> sorted = row.per_seed;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t m = sorted.size();
      row.median = m % 2 == 1 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

RegretAudit exp3_regret_audit(const std::vector<std::size_t>& chosen, const Eigen::MatrixXd& losses) {
  if (static_cast<Index>(chosen.size()) != losses.rows()) throw ValidationError("regret audit: one choice per round required");
  if (losses.cols() < 2) throw ValidationError("regret audit: at least two arms required");
  RegretAudit out;
  out.rounds = chosen.size();
  double incurred = 0.0;
  for (std::size_t t = 0; t < chosen.size(); ++t) incurred += losses(static_cast<Index>(t), static_cast<Index>(chosen[t]));
  out.regret = incurred - losses.colwise().sum().minCoeff();
  const auto K = static_cast<double>(losses.cols());
  out.bound = std::sqrt(2.0) * std::sqrt(static_cast<double>(out.rounds) * K * std::log(K));
  return out;
}

double lambda_regret(const std::vector<double>& played, const std::vector<double>& v_r, const std::vector<double>& v_c,
                     double kappa, const LambdaDomain& domain) {
  if (played.size() != v_r.size() || played.size() != v_c.size()) throw ValidationError("lambda regret: length mismatch");
  double incurred = 0.0;
  double reward_total = 0.0;
  double slack_total = 0.0;
  for (std::size_t t = 0; t < played.size(); ++t) {
    incurred += v_r[t] - played[t] * (v_c[t] - kappa);
    reward_total += v_r[t];
    slack_total += v_c[t] - kappa;
  }
  // Cumulative loss is affine in the fixed comparator.
  const auto total = [&](double lambda) { return reward_total - lambda * slack_total; };
  double best = std::min(total(0.0), total(domain.C));
  if (domain.grid) {
    best = std::numeric_limits<double>::infinity();
    for (double lambda : domain.grid->values()) best = std::min(best, total(lambda));
  }
  return incurred - best;
}

Json to_json(const EquilibriumReport& r) {
  return Json{{"epsilon", r.epsilon},
              {"eps_D", r.gap_policy_side},
              {"eps_lambda", r.gap_lambda_side},
              {"lambda_bar", r.lambda_bar},
              {"v_r", r.value_reward},
              {"v_c", r.value_cost},
              {"kkt_residual", r.kkt_residual},
              {"domain", r.on_grid ? "grid" : "continuous"}};
}

Json to_json(const NormalizedScores& s) {
  return Json{{"r_min", s.r_min}, {"r_max", s.r_max}, {"R_norm", s.reward}, {"C_norm", s.cost}, {"safe", s.safe}};
}

Json to_json(const EpisodeReturns& e) {
  return Json{{"episodes", e.episodes},
              {"mean_reward", e.mean_reward},
              {"mean_cost", e.mean_cost},
              {"se_reward", e.se_reward},
              {"se_cost", e.se_cost}};
}

}  // namespace o3srl
