#include "o3srl/exact_solver.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace o3srl {

namespace {

struct Evaluated {
  GreedySolution<double> greedy;
  double value_reward = 0.0;
  double value_cost = 0.0;
};

Evaluated best_response(const Cmdp& cmdp, double lambda) {
  Evaluated e;
  e.greedy = value_iteration(cmdp, relabeled_signal(cmdp, lambda));
  e.value_reward = policy_evaluation(cmdp, e.greedy.policy, cmdp.reward);
  e.value_cost = policy_evaluation(cmdp, e.greedy.policy, cmdp.cost);
  return e;
}

constexpr double kFeasibilitySlack = 1e-12;

}  // namespace

double max_cost_value(const Cmdp& cmdp) { return value_iteration(cmdp, cmdp.cost).value; }

double min_cost_value(const Cmdp& cmdp) {
  const Eigen::MatrixXd negated = -cmdp.cost;
  return -value_iteration(cmdp, negated).value;
}

ExactSolution solve_cmdp_exact(const Cmdp& cmdp, double lambda_max, double lambda_tolerance) {
  cmdp.validate();
  if (!(lambda_max > 0.0)) throw ValidationError("solve_cmdp_exact: lambda bound must be positive");
  const double kappa = cmdp.cost_limit;

  ExactSolution out;
  out.min_cost = min_cost_value(cmdp);
  if (out.min_cost > kappa + kFeasibilitySlack) {
    throw InfeasibleError("Slater check failed: minimum achievable cost " + std::to_string(out.min_cost) +
                          " exceeds the cost limit " + std::to_string(kappa));
  }

  Evaluated low = best_response(cmdp, 0.0);
  if (low.value_cost <= kappa) {
    out.mixture = PolicyMixture::single(cmdp, low.greedy.policy);
    out.lambda_star = 0.0;
    out.value_reward = low.value_reward;
    out.value_cost = low.value_cost;
    return out;
  }

  Evaluated high = best_response(cmdp, lambda_max);
  if (high.value_cost > kappa) {
    out.boundary_warning = true;
    out.mixture = PolicyMixture::single(cmdp, high.greedy.policy);
    out.lambda_star = lambda_max;
    out.value_reward = high.value_reward;
    out.value_cost = high.value_cost;
    return out;
  }

  double lo = 0.0;
  double hi = lambda_max;
  while (hi - lo > lambda_tolerance) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    Evaluated e = best_response(cmdp, mid);
    if (e.value_cost > kappa) {
      lo = mid;
      low = std::move(e);
    } else {
      hi = mid;
      high = std::move(e);
    }
  }

  // low violates the limit, high satisfies it; mix them so V_c = kappa.
  const double spread = low.value_cost - high.value_cost;
  const double weight_low = spread > 0.0 ? std::clamp((kappa - high.value_cost) / spread, 0.0, 1.0) : 0.0;
  out.mixture = PolicyMixture::blend(cmdp, low.greedy.policy, high.greedy.policy, weight_low);
  out.value_reward = weight_low * low.value_reward + (1.0 - weight_low) * high.value_reward;
  out.value_cost = weight_low * low.value_cost + (1.0 - weight_low) * high.value_cost;
  // Both endpoint policies are optimal where their Lagrangian lines cross.
  const double crossing = spread > 0.0 ? (low.value_reward - high.value_reward) / spread : hi;
  out.lambda_star = std::clamp(crossing, lo, hi);
  return out;
}

std::size_t deterministic_policy_count(const Cmdp& cmdp) {
  std::size_t count = 1;
  const auto A = static_cast<std::size_t>(cmdp.num_actions());
  for (Index s = 0; s < cmdp.num_states(); ++s) {
    if (count > std::numeric_limits<std::size_t>::max() / A) return std::numeric_limits<std::size_t>::max();
    count *= A;
  }
  return count;
}

BruteForceSolution brute_force_cmdp(const Cmdp& cmdp, std::size_t cap) {
  cmdp.validate();
  const std::size_t total = deterministic_policy_count(cmdp);
  if (total > cap) {
    throw EnumerationCapError("brute force: " + std::to_string(cmdp.num_actions()) + "^" +
                              std::to_string(cmdp.num_states()) + " policies exceeds the cap of " + std::to_string(cap));
  }
  const auto S = static_cast<std::size_t>(cmdp.num_states());
  const int A = static_cast<int>(cmdp.num_actions());
  const double kappa = cmdp.cost_limit;

  struct Point {
    std::vector<int> actions;
    double reward;
    double cost;
  };
  std::vector<Point> points;
  points.reserve(total);
  std::vector<int> actions(S, 0);
  for (std::size_t k = 0; k < total; ++k) {
    const auto policy = TabularPolicy::deterministic(actions, A);
    points.push_back({actions, policy_evaluation(cmdp, policy, cmdp.reward), policy_evaluation(cmdp, policy, cmdp.cost)});
    for (std::size_t s = 0; s < S; ++s) {  // odometer increment
      if (++actions[s] < A) break;
      actions[s] = 0;
    }
  }

  // Pareto frontier: ascending cost, strictly increasing reward.
  std::vector<std::size_t> order(points.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].cost != points[b].cost) return points[a].cost < points[b].cost;
    return points[a].reward > points[b].reward;
  });
  std::vector<std::size_t> frontier;
  double best_reward = -std::numeric_limits<double>::infinity();
  for (std::size_t idx : order) {
    if (points[idx].reward > best_reward) {
      frontier.push_back(idx);
      best_reward = points[idx].reward;
    }
  }

  const double tol = 1e-12;
  std::ptrdiff_t best_single = -1;
  for (std::size_t idx : frontier) {
    if (points[idx].cost <= kappa + tol) best_single = static_cast<std::ptrdiff_t>(idx);
  }
  if (best_single < 0) throw InfeasibleError("brute force: no policy satisfies the cost limit");

  BruteForceSolution out;
  out.policies_enumerated = total;
  const Point& safe_best = points[static_cast<std::size_t>(best_single)];
  out.value_reward = safe_best.reward;
  out.value_cost = safe_best.cost;
  std::ptrdiff_t pair_safe = -1;
  std::ptrdiff_t pair_risky = -1;
  double pair_weight = 0.0;

  for (std::size_t i : frontier) {
    if (points[i].cost > kappa + tol) continue;
    for (std::size_t j : frontier) {
      if (points[j].cost <= kappa + tol) continue;
      const double w = (kappa - points[i].cost) / (points[j].cost - points[i].cost);
      const double reward = (1.0 - w) * points[i].reward + w * points[j].reward;
      if (reward > out.value_reward) {
        out.value_reward = reward;
        out.value_cost = (1.0 - w) * points[i].cost + w * points[j].cost;
        pair_safe = static_cast<std::ptrdiff_t>(i);
        pair_risky = static_cast<std::ptrdiff_t>(j);
        pair_weight = w;
      }
    }
  }

  if (pair_safe < 0) {
    out.mixture = PolicyMixture::single(cmdp, TabularPolicy::deterministic(safe_best.actions, A));
  } else {
    out.mixture = PolicyMixture::blend(cmdp,
                                       TabularPolicy::deterministic(points[static_cast<std::size_t>(pair_risky)].actions, A),
                                       TabularPolicy::deterministic(points[static_cast<std::size_t>(pair_safe)].actions, A),
                                       pair_weight);
  }
  return out;
}

}  // namespace o3srl
