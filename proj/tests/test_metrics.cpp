#include "o3srl/driver.hpp"
#include "o3srl/exact_solver.hpp"
#include "o3srl/metrics.hpp"
#include "fixtures.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace o3srl;

namespace {

/// Garnet whose unconstrained optimum violates a limit at half its cost.
Cmdp binding_garnet(std::uint64_t seed) {
  Cmdp m = test::garnet(seed, 5, 3);
  m.cost_limit = 0.5 * unconstrained_cost(m);
  return m;
}

}  // namespace

TEST_CASE("equilibrium_gap: the exact saddle point certifies") {
  int interior = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Cmdp m = binding_garnet(seed);
    if (min_cost_value(m) >= m.cost_limit) continue;
    const ExactSolution sol = solve_cmdp_exact(m, 5.0);
    if (!(sol.lambda_star > 0.0 && sol.lambda_star < 5.0)) continue;
    ++interior;
    const EquilibriumReport r = equilibrium_gap(m, sol.mixture, sol.lambda_star, LambdaDomain::interval(5.0));
    CHECK(r.epsilon <= 1e-6);
    CHECK(r.kkt_residual <= 1e-6);
    CHECK(!r.on_grid);
  }
  CHECK(interior >= 5);
}

TEST_CASE("equilibrium_gap: unconstrained optimum at lambda 0 leaves a multiplier-side gap") {
  const Cmdp m = binding_garnet(3);
  const auto best = value_iteration(m, m.reward);
  const PolicyMixture d = PolicyMixture::single(m, best.policy);
  const double v_c = policy_evaluation(m, best.policy, m.cost);
  REQUIRE(v_c > m.cost_limit);
  const EquilibriumReport r = equilibrium_gap(m, d, 0.0, LambdaDomain::interval(5.0));
  CHECK(r.gap_lambda_side == doctest::Approx(5.0 * (v_c - m.cost_limit)).epsilon(1e-12));
  CHECK(std::abs(r.gap_policy_side) <= 1e-9);
  CHECK(r.epsilon == r.gap_lambda_side);
  CHECK(r.kkt_residual == 0.0);
}

TEST_CASE("equilibrium_gap: uniform policy on the corridor at lambda = C") {
  const Cmdp m = build_cmdp(test::fixture_config("corridor"));
  const TabularPolicy uniform = TabularPolicy::uniform(m.num_states(), m.num_actions());
  const PolicyMixture d = PolicyMixture::single(m, uniform);
  const EquilibriumReport r = equilibrium_gap(m, d, 5.0, LambdaDomain::interval(5.0));
  const Eigen::MatrixXd f = relabeled_signal(m, 5.0);
  const double expected = value_iteration(m, f).value - lagrangian(m, d, 5.0).lagrangian;
  CHECK(r.gap_policy_side == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(expected - (value_iteration(m, f).value - policy_evaluation(m, uniform, f))) <= 1e-9);
  CHECK_THROWS_AS(equilibrium_gap(m, d, 5.5, LambdaDomain::interval(5.0)), ValidationError);
}

TEST_CASE("property: both gap sides are nonnegative for random mixtures") {
  Rng rng(12);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Cmdp m = binding_garnet(seed);
    for (int trial = 0; trial < 20; ++trial) {
      const PolicyMixture d = PolicyMixture::blend(m, test::random_policy(rng, 5, 3), test::random_policy(rng, 5, 3), rng.uniform());
      const double lambda = rng.uniform(0.0, 5.0);
      const EquilibriumReport r = equilibrium_gap(m, d, lambda, LambdaDomain::interval(5.0));
      CHECK(r.gap_policy_side >= -1e-9);
      CHECK(r.gap_lambda_side >= -1e-9);
      const EquilibriumReport g = equilibrium_gap(m, d, 2.5, LambdaDomain::on_grid(uniform_grid(5.0, 5)));
      CHECK(g.gap_lambda_side >= -1e-9);
      CHECK(g.on_grid);
    }
  }
}

TEST_CASE("property: grid scan including both endpoints matches endpoint evaluation") {
  Rng rng(5);
  const Cmdp m = binding_garnet(8);
  for (int trial = 0; trial < 50; ++trial) {
    const PolicyMixture d = PolicyMixture::single(m, test::random_policy(rng, 5, 3));
    const double lambda = 1.25 * static_cast<double>(rng.below(5));
    const double a = equilibrium_gap(m, d, lambda, LambdaDomain::interval(5.0)).gap_lambda_side;
    const double b = equilibrium_gap(m, d, lambda, LambdaDomain::on_grid(uniform_grid(5.0, 5))).gap_lambda_side;
    CHECK(std::abs(a - b) <= 1e-12);
  }
}

TEST_CASE("normalized_scores examples") {
  const NormalizedScores zero = normalized_scores(0.5, 0.0, 0.0, 1.0, 2.0);
  CHECK(zero.cost == 0.0);
  CHECK(zero.safe);
  const NormalizedScores boundary = normalized_scores(0.5, 5.0, 0.0, 1.0, 5.0);
  CHECK(boundary.cost == 1.0);
  CHECK(boundary.safe);
  CHECK(!normalized_scores(0.5, 5.0 + 1e-12, 0.0, 1.0, 5.0).safe);
  CHECK(normalized_scores(3.0, 0.0, -1.0, 3.0, 1.0).reward == 1.0);
  CHECK(normalized_scores(-1.0, 0.0, -1.0, 3.0, 1.0).reward == 0.0);
  CHECK_THROWS_AS(normalized_scores(1.0, 0.0, 2.0, 2.0, 1.0), ValidationError);
  CHECK_THROWS_AS(normalized_scores(1.0, 0.0, 0.0, 2.0, 0.0), ValidationError);
}

TEST_CASE("property: normalized reward is invariant under affine reward rescaling") {
  Rng rng(2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Cmdp m = binding_garnet(seed);
    const TabularPolicy pi = test::random_policy(rng, 5, 3);
    const auto [lo, hi] = reward_bounds(m);
    const double before = normalized_scores(policy_evaluation(m, pi, m.reward), 0.0, lo, hi, 1.0).reward;
    const double scale = rng.uniform(0.5, 4.0);
    const double shift = rng.uniform(-2.0, 2.0);
    m.reward = (scale * m.reward.array() + shift).matrix();
    const auto [lo2, hi2] = reward_bounds(m);
    CHECK(lo2 == doctest::Approx(scale * lo + shift * m.horizon()).epsilon(1e-10));
    const double after = normalized_scores(policy_evaluation(m, pi, m.reward), 0.0, lo2, hi2, 1.0).reward;
    CHECK(std::abs(after - before) <= 1e-10);
  }
}

TEST_CASE("reward_bounds are the worst and best policy values") {
  const Cmdp m = test::garnet(4, 3, 2);
  double lo = 1e300;
  double hi = -1e300;
  for (const auto& a : test::all_deterministic(3, 2)) {
    const double v = policy_evaluation(m, TabularPolicy::deterministic(a, 2), m.reward);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const auto [r_min, r_max] = reward_bounds(m);
  CHECK(std::abs(r_min - lo) <= 1e-9);
  CHECK(std::abs(r_max - hi) <= 1e-9);
}

TEST_CASE("episode_returns: reward at step one is worth gamma exactly") {
  Cmdp m = test::chain(4, 0.9);
  m.reward(1, 0) = 1.0;
  const EpisodeReturns e = episode_returns(m, TabularPolicy::uniform(4, 1), 5, 0, 1);
  CHECK(e.mean_reward == 0.9);
  CHECK(e.se_reward == 0.0);
  CHECK(e.mean_cost == 0.0);
  CHECK(e.episodes == 5);
}

TEST_CASE("episode_returns: Monte-Carlo cost of the exact solution within 3 standard errors") {
  const Cmdp m = binding_garnet(6);
  const ExactSolution sol = solve_cmdp_exact(m, 5.0);
  const EpisodeReturns e = episode_returns(m, sol.mixture, 10000, 0, 77);
  CHECK(std::abs(e.mean_cost - sol.value_cost) <= 3.0 * e.se_cost);
  CHECK(std::abs(e.mean_reward - sol.value_reward) <= 4.0 * e.se_reward);
}

TEST_CASE("episode_returns is reproducible per seed") {
  const Cmdp m = binding_garnet(2);
  const TabularPolicy pi = TabularPolicy::uniform(5, 3);
  const EpisodeReturns a = episode_returns(m, pi, 20, 0, 3);
  const EpisodeReturns b = episode_returns(m, pi, 20, 0, 3);
  CHECK(a.mean_reward == b.mean_reward);
  CHECK(a.mean_cost == b.mean_cost);
  CHECK(episode_returns(m, pi, 20, 0, 4).mean_reward != a.mean_reward);
  CHECK_THROWS_AS(episode_returns(m, pi, 0, 0, 3), ValidationError);
}

TEST_CASE("oracle audit: full coverage of a deterministic instance is exact") {
  const Cmdp m = test::garnet(3, 6, 3, 0.9, 1);
  const OfflineDataset d = rollout_dataset(m, TabularPolicy::uniform(6, 3), 400, 20, 4);
  for (double lambda : {0.0, 2.5, 5.0}) CHECK(std::abs(oracle_suboptimality(m, d, lambda)) <= 1e-8);
}

TEST_CASE("oracle audit: rows per size and multiplier, suboptimality nonnegative") {
  Cmdp m = test::garnet(7, 4, 2);
  m.cost_limit = 0.5 * unconstrained_cost(m);
  OracleAuditOptions opts;
  opts.sizes = {200, 2000};
  opts.seeds = {0, 1, 2};
  const auto rows = oracle_audit(m, opts);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].n == 200);
  CHECK(rows[0].lambda == 0.0);
  CHECK(rows[5].lambda == 5.0);
  for (const auto& r : rows) {
    CHECK(r.per_seed.size() == 3);
    for (double v : r.per_seed) CHECK(v >= -1e-9);
  }
}

TEST_CASE("exp3_regret_audit examples") {
  Eigen::MatrixXd losses(4, 2);
  losses << 0, 1, 0, 1, 0, 1, 0, 1;
  const RegretAudit best = exp3_regret_audit({0, 0, 0, 0}, losses);
  CHECK(best.regret == 0.0);
  CHECK(best.bound == doctest::Approx(std::sqrt(2.0 * 4 * 2 * std::log(2.0))).epsilon(1e-12));
  CHECK(exp3_regret_audit({1, 1, 0, 0}, losses).regret == 2.0);
  CHECK_THROWS_AS(exp3_regret_audit({0}, losses), ValidationError);
}

TEST_CASE("lambda_regret against the best fixed multiplier") {
  // Constant slack v_c - kappa = 1: best fixed lambda is C.
  const std::vector<double> played{0.0, 1.0, 2.0};
  const std::vector<double> v_r{1.0, 1.0, 1.0};
  const std::vector<double> v_c{2.0, 2.0, 2.0};
  const double r = lambda_regret(played, v_r, v_c, 1.0, LambdaDomain::interval(5.0));
  CHECK(r == doctest::Approx((3.0 - 3.0) - (3.0 - 15.0)).epsilon(1e-12));
  CHECK(lambda_regret(played, v_r, v_c, 1.0, LambdaDomain::on_grid(LambdaGrid({0.0, 2.0}))) ==
        doctest::Approx(0.0 - (3.0 - 6.0)).epsilon(1e-12));
}

TEST_CASE("property: general-loop gap tracks the multiplier regret rate on the corridor") {
  const Instance inst = test::fixture_instance("corridor");
  RunConfig c;
  c.mode = RunMode::general;
  c.T = 5000;
  const RunResult r = run_general(inst.truth, inst.model, c);
  const double kappa = inst.truth.cost_limit;
  const double regret = lambda_regret(r.played_lambda, r.v_r_hat, r.v_c_hat, kappa, LambdaDomain::interval(5.0));
  const double eps = equilibrium_gap(inst.truth, r.mixture, r.lambda_bar, LambdaDomain::interval(5.0)).epsilon;
  MESSAGE("eps = " << eps << ", regret/T = " << regret / c.T);
  // Exact data: the oracle term vanishes and eps is bounded by the regret rate.
  CHECK(eps <= 3.0 * std::max(regret / static_cast<double>(c.T), 1e-9) + 1e-9);
}

TEST_CASE("report serialization keys") {
  EquilibriumReport r;
  const Json j = to_json(r);
  for (const char* key : {"epsilon", "eps_D", "eps_lambda", "lambda_bar", "v_r", "v_c", "kkt_residual", "domain"}) {
    CHECK(j.contains(key));
  }
  CHECK(to_json(normalized_scores(1.0, 0.5, 0.0, 2.0, 1.0))["C_norm"] == 0.5);
  CHECK(to_json(EpisodeReturns{})["episodes"] == 0);
}
