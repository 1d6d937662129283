#include "o3srl/driver.hpp"
#include "o3srl/exact_solver.hpp"
#include "o3srl/lagrangian.hpp"
#include "fixtures.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace o3srl;

namespace {

RunConfig config_for(RunMode mode, std::size_t T, std::uint64_t seed = 0) {
  RunConfig c;
  c.mode = mode;
  c.T = T;
  c.seed = seed;
  return c;
}

/// Garnet with a uniform-behavior dataset large enough to cover every pair.
Instance covered_garnet(std::uint64_t seed, double kappa_fraction) {
  Instance inst;
  inst.truth = test::garnet(seed, 5, 3);
  inst.truth.cost_limit = kappa_fraction * unconstrained_cost(inst.truth);
  inst.data = rollout_dataset(inst.truth, TabularPolicy::uniform(5, 3), 400, 50, seed + 100);
  inst.model = fit_empirical_mdp(inst.data, 5, 3, inst.truth.gamma, inst.truth.cost_limit);
  std::tie(inst.r_min, inst.r_max) = reward_bounds(inst.truth);
  return inst;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

}  // namespace

TEST_CASE("running-mean occupancy equals the naive average of stored iterates") {
  const Instance inst = test::fixture_instance("garnet_a");
  for (RunMode mode : {RunMode::general, RunMode::practical, RunMode::final}) {
    RunConfig c = config_for(mode, 100, 3);
    c.store_iterates = true;
    c.lambda.eta = 0.5;
    c.oracle.M = 1;
    const RunResult r = run(inst.truth, inst.model, c);
    REQUIRE(r.iterates.size() == 100);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(inst.truth.num_states(), inst.truth.num_actions());
    for (const auto& a : r.iterates) sum += occupancy_measure(inst.truth, TabularPolicy::deterministic(a, inst.truth.num_actions()));
    CHECK((r.mixture.mean_occupancy - sum / 100.0).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK_NOTHROW(r.mixture.validate());
  }
}

TEST_CASE("runs are deterministic per seed") {
  const Instance inst = test::fixture_instance("corridor");
  for (RunMode mode : {RunMode::general, RunMode::practical, RunMode::final}) {
    const RunConfig c = config_for(mode, 3000, 9);
    const RunResult a = run(inst.truth, inst.model, c);
    const RunResult b = run(inst.truth, inst.model, c);
    CHECK(trace_to_csv(a) == trace_to_csv(b));
    CHECK(run_result_to_json(a).dump() == run_result_to_json(b).dump());
  }
  const RunResult s1 = run(inst.truth, inst.model, config_for(RunMode::practical, 3000, 1));
  const RunResult s2 = run(inst.truth, inst.model, config_for(RunMode::practical, 3000, 2));
  CHECK(trace_to_csv(s1) != trace_to_csv(s2));
}

TEST_CASE("run_general with T = 1 returns the single oracle policy") {
  const Instance inst = test::fixture_instance("garnet_a");
  const RunResult r = run_general(inst.truth, inst.model, config_for(RunMode::general, 1));
  const OracleOutput o = oracle_solve(inst.model, inst.model.relabeled_signal(0.0));
  REQUIRE(r.mixture.support.size() == 1);
  CHECK(r.mixture.support[0].first == o.policy);
  CHECK(r.last_policy == o.policy);
  CHECK(r.trace[0].lambda == 0.0);
  CHECK(r.trace[0].arm == -1);
  // The returned multiplier is the first update lambda_1.
  ContinuousLambdaState s;
  s.C = 5.0;
  s.step0 = 5.0 / (inst.model.model.horizon() * inst.model.model.cost.maxCoeff());
  ogd_lambda_update(s, r.v_c_hat[0], inst.model.model.cost_limit);
  CHECK(r.lambda_bar == s.lambda);
}

TEST_CASE("run_general: an inactive constraint recovers the unconstrained optimum") {
  Instance inst = test::fixture_instance("corridor");
  inst.truth.cost_limit = max_cost_value(inst.truth) + 1.0;
  inst.model.model.cost_limit = inst.truth.cost_limit;
  const RunResult r = run_general(inst.truth, inst.model, config_for(RunMode::general, 2000));
  const double best = value_iteration(inst.truth, inst.truth.reward).value;
  CHECK(std::abs(r.mixture.value(inst.truth, inst.truth.reward) - best) <= 0.01 * inst.truth.horizon());
  CHECK(r.lambda_bar == 0.0);
}

TEST_CASE("multiplier output stays in [0, C] and on the grid when projected") {
  const Instance inst = test::fixture_instance("hazard_detour");
  for (RunMode mode : {RunMode::general, RunMode::practical, RunMode::final}) {
    const RunResult r = run(inst.truth, inst.model, config_for(mode, 2000, 4));
    CHECK(r.lambda_bar >= 0.0);
    CHECK(r.lambda_bar <= 5.0);
    for (double l : r.played_lambda) CHECK((l >= 0.0 && l <= 5.0));
    if (mode != RunMode::general) {
      REQUIRE(r.grid.has_value());
      const auto& g = r.grid->values();
      CHECK(std::find(g.begin(), g.end(), r.lambda_bar) != g.end());
    }
  }
}

TEST_CASE("run_practical rejects a single-arm grid") {
  const Instance inst = test::fixture_instance("garnet_a");
  RunConfig c = config_for(RunMode::practical, 10);
  c.lambda.K = 1;
  CHECK_THROWS_AS(run_practical(inst.truth, inst.model, c), ValidationError);
  c.mode = RunMode::final;
  c.lambda.K = 5;
  c.oracle.M = 0;
  CHECK_THROWS_AS(run_final(inst.truth, inst.model, c), ValidationError);
}

TEST_CASE("run_practical with the two-point grid on the corridor stays near the limit") {
  const Instance inst = test::fixture_instance("corridor");
  RunConfig c = config_for(RunMode::practical, 20000);
  c.lambda.K = 2;
  const RunResult r = run_practical(inst.truth, inst.model, c);
  CHECK(r.mixture.value(inst.truth, inst.truth.cost) <= inst.truth.cost_limit + 0.02 * inst.truth.horizon());
}

TEST_CASE("run_final with M = 10 on the corridor: safe and near the constrained optimum") {
  const Instance inst = test::fixture_instance("corridor");
  const ExactSolution exact = solve_cmdp_exact(inst.truth, 5.0);
  std::vector<double> rewards;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Instance si = test::fixture_instance("corridor", seed);
    const RunResult r = run_final(si.truth, si.model, config_for(RunMode::final, 20000, seed));
    const double v_c = policy_evaluation(si.truth, r.last_policy, si.truth.cost);
    CHECK(v_c <= si.truth.cost_limit + 0.05 * si.truth.horizon());
    rewards.push_back(policy_evaluation(si.truth, r.last_policy, si.truth.reward));
  }
  CHECK(median(rewards) >= 0.8 * exact.value_reward);
}

TEST_CASE("run_final with a convergent sweep budget reproduces run_practical") {
  for (const char* name : {"corridor", "garnet_b"}) {
    const Instance inst = test::fixture_instance(name);
    for (std::uint64_t seed : {0u, 5u}) {
      RunConfig c = config_for(RunMode::final, 3000, seed);
      c.oracle.M = 10000;
      const RunResult fin = run_final(inst.truth, inst.model, c);
      c.mode = RunMode::practical;
      const RunResult prac = run_practical(inst.truth, inst.model, c);
      CHECK(fin.played_lambda == prac.played_lambda);
      const auto& T = inst.truth;
      CHECK(std::abs(fin.mixture.value(T, T.reward) - prac.mixture.value(T, T.reward)) <= 1e-6);
      CHECK(std::abs(fin.mixture.value(T, T.cost) - prac.mixture.value(T, T.cost)) <= 1e-6);
      CHECK(fin.last_policy == prac.last_policy);
    }
  }
}

TEST_CASE("run_final with M = 1 still produces a valid policy") {
  const Instance inst = test::fixture_instance("hazard_detour");
  RunConfig c = config_for(RunMode::final, 5000, 2);
  c.oracle.M = 1;
  const RunResult r = run_final(inst.truth, inst.model, c);
  CHECK_NOTHROW(r.last_policy.validate_for(inst.truth));
  CHECK(r.last_policy.deterministic_actions().size() == static_cast<std::size_t>(inst.truth.num_states()));
  CHECK(r.trace.size() == 5000);
}

TEST_CASE("property: slack constraints drive the general multiplier toward zero") {
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 20; ++seed) {
    const Instance inst = covered_garnet(seed, 1.2);
    const ExactSolution exact = solve_cmdp_exact(inst.truth, 5.0);
    if (!(exact.value_cost < inst.truth.cost_limit - 1e-9)) continue;
    ++checked;
    const RunResult r = run_general(inst.truth, inst.model, config_for(RunMode::general, 2000, seed));
    CHECK(r.lambda_bar <= 0.1 * 5.0);
  }
}

TEST_CASE("trace logs true-model values every eval_every rounds") {
  const Instance inst = test::fixture_instance("garnet_c");
  RunConfig c = config_for(RunMode::practical, 250);
  c.eval_every = 100;
  const RunResult r = run_practical(inst.truth, inst.model, c);
  REQUIRE(r.trace.size() == 250);
  for (const TraceRow& row : r.trace) {
    const bool logged = row.t == 1 || row.t % 100 == 0 || row.t == 250;
    CHECK(std::isnan(row.v_r) == !logged);
    CHECK(row.arm >= 0);
  }
  const std::string csv = trace_to_csv(r);
  CHECK(csv.rfind("t,lambda,arm,v_tilde,v_r,v_c\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 251);
}

TEST_CASE("practical loop: sampled arm values match oracle values on the empirical model") {
  const Instance inst = test::fixture_instance("garnet_b");
  const RunResult r = run_practical(inst.truth, inst.model, config_for(RunMode::practical, 200, 7));
  REQUIRE(r.grid.has_value());
  for (std::size_t k = 0; k < r.grid->size(); ++k) {
    const OracleOutput o = oracle_solve(inst.model, inst.model.relabeled_signal((*r.grid)[k]));
    CHECK(r.arm_values[k] == o.exact_value_on_empirical);
  }
  for (const TraceRow& row : r.trace) CHECK(row.v_tilde == r.arm_values[static_cast<std::size_t>(row.arm)]);
}
