#pragma once

#include "o3srl/lagrangian.hpp"

#include <cstddef>
#include <vector>

namespace o3srl {

struct ExactSolution {
  PolicyMixture mixture;
  double lambda_star = 0.0;
  double value_reward = 0.0;
  double value_cost = 0.0;
  /// Lowest cost any policy can reach (the Slater check).
  double min_cost = 0.0;
  /// Set when the subgradient is still negative at lambda = C.
  bool boundary_warning = false;
};

/// Constrained optimum via bisection on the multiplier over [0, C].
///
/// The dual function g(lambda) = max_pi L(pi, lambda) is convex and piecewise
/// linear in lambda, with subgradient kappa - V_c(pi_lambda). Bisection brackets
/// the kink to `lambda_tolerance`; the two greedy policies at the bracket ends
/// are mixed so that V_c = kappa exactly. Throws InfeasibleError when even the
/// cheapest policy exceeds the cost limit.
ExactSolution solve_cmdp_exact(const Cmdp& cmdp, double lambda_max, double lambda_tolerance = 1e-9);

struct BruteForceSolution {
  PolicyMixture mixture;
  double value_reward = 0.0;
  double value_cost = 0.0;
  std::size_t policies_enumerated = 0;
};

inline constexpr std::size_t kBruteForceCap = 100000;

class EnumerationCapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Number of deterministic policies, saturating at SIZE_MAX.
std::size_t deterministic_policy_count(const Cmdp& cmdp);

/// Enumerates every deterministic policy and the best feasible mixture of at
/// most two of them. Independent of the bisection path in solve_cmdp_exact.
BruteForceSolution brute_force_cmdp(const Cmdp& cmdp, std::size_t cap = kBruteForceCap);

/// max_pi V_c^pi and min_pi V_c^pi.
double max_cost_value(const Cmdp& cmdp);
double min_cost_value(const Cmdp& cmdp);

}  // namespace o3srl
