#pragma once

// Exact planning primitives on tabular CMDPs: policy evaluation by direct
// linear solve, discounted occupancy measures, and greedy optimal control.

#include "o3srl/cmdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace o3srl {

/// Relative tolerance used when comparing action values. Actions within this
/// band of the best are treated as tied and resolved to the lowest index.
inline constexpr double kTieTolerance = 1e-10;

template <typename Scalar, typename Derived>
void require_finite_signal(const CmdpT<Scalar>& cmdp, const Eigen::MatrixBase<Derived>& signal) {
  if (signal.rows() != cmdp.num_states() || signal.cols() != cmdp.num_actions()) {
    throw ValidationError("signal: shape does not match cmdp");
  }
  if (!signal.allFinite()) throw ValidationError("signal: non-finite entry");
}

/// State-to-state kernel under `policy`: sum_a diag(pi(., a)) P_a.
template <typename Scalar>
MatrixX<Scalar> policy_kernel(const CmdpT<Scalar>& cmdp, const TabularPolicyT<Scalar>& policy) {
  const Index S = cmdp.num_states();
  MatrixX<Scalar> kernel = MatrixX<Scalar>::Zero(S, S);
  for (Index a = 0; a < cmdp.num_actions(); ++a) {
    kernel.noalias() += policy.action_probs.col(a).asDiagonal() * cmdp.transition[static_cast<std::size_t>(a)];
  }
  return kernel;
}

/// Per-state expected signal under `policy`.
template <typename Scalar, typename Derived>
VectorX<Scalar> policy_signal(const TabularPolicyT<Scalar>& policy, const Eigen::MatrixBase<Derived>& signal) {
  return policy.action_probs.cwiseProduct(signal).rowwise().sum();
}

/// Solves v = f_pi + gamma P_pi v.
template <typename Scalar, typename Derived>
VectorX<Scalar> state_values(const CmdpT<Scalar>& cmdp, const TabularPolicyT<Scalar>& policy,
                             const Eigen::MatrixBase<Derived>& signal) {
  const Index S = cmdp.num_states();
  MatrixX<Scalar> system = MatrixX<Scalar>::Identity(S, S) - cmdp.gamma * policy_kernel(cmdp, policy);
  return system.partialPivLu().solve(policy_signal(policy, signal));
}

/// Expected discounted value of `signal` from the initial distribution.
template <typename Scalar, typename Derived>
Scalar policy_evaluation(const CmdpT<Scalar>& cmdp, const TabularPolicyT<Scalar>& policy,
                         const Eigen::MatrixBase<Derived>& signal) {
  require_finite_signal(cmdp, signal);
  policy.validate_for(cmdp);
  return cmdp.initial_dist.dot(state_values(cmdp, policy, signal));
}

/// Normalized discounted occupancy d(s, a) = (1 - gamma) sum_t gamma^t Pr(s_t = s, a_t = a).
template <typename Scalar>
MatrixX<Scalar> occupancy_measure(const CmdpT<Scalar>& cmdp, const TabularPolicyT<Scalar>& policy) {
  policy.validate_for(cmdp);
  const Index S = cmdp.num_states();
  MatrixX<Scalar> system = MatrixX<Scalar>::Identity(S, S) - cmdp.gamma * policy_kernel(cmdp, policy).transpose();
  VectorX<Scalar> state_occ = (Scalar(1) - cmdp.gamma) * system.partialPivLu().solve(cmdp.initial_dist);
  return state_occ.asDiagonal() * policy.action_probs;
}

/// Value of `signal` read off an occupancy measure: <d, f> / (1 - gamma).
template <typename Scalar, typename DerivedD, typename DerivedF>
Scalar occupancy_value(const CmdpT<Scalar>& cmdp, const Eigen::MatrixBase<DerivedD>& occupancy,
                       const Eigen::MatrixBase<DerivedF>& signal) {
  return occupancy.cwiseProduct(signal).sum() / (Scalar(1) - cmdp.gamma);
}

/// Q(s, a) = f(s, a) + gamma sum_s' P_a(s, s') v(s').
template <typename Scalar, typename Derived>
MatrixX<Scalar> action_values(const CmdpT<Scalar>& cmdp, const Eigen::MatrixBase<Derived>& signal,
                              const VectorX<Scalar>& values) {
  MatrixX<Scalar> q = signal;
  for (Index a = 0; a < cmdp.num_actions(); ++a) {
    q.col(a).noalias() += cmdp.gamma * (cmdp.transition[static_cast<std::size_t>(a)] * values);
  }
  return q;
}

/// Lowest-index action whose value is within the tie band of the row maximum.
template <typename Derived>
int greedy_action(const Eigen::MatrixBase<Derived>& row) {
  const double top = static_cast<double>(row.maxCoeff());
  const double band = kTieTolerance * (1.0 + std::abs(top));
  for (Index a = 0; a < row.size(); ++a) {
    if (static_cast<double>(row(a)) >= top - band) return static_cast<int>(a);
  }
  return 0;
}

template <typename Derived>
std::vector<int> greedy_actions(const Eigen::MatrixBase<Derived>& q) {
  std::vector<int> actions(static_cast<std::size_t>(q.rows()));
  for (Index s = 0; s < q.rows(); ++s) actions[static_cast<std::size_t>(s)] = greedy_action(q.row(s));
  return actions;
}

/// sup_s |max_a Q(s, a) - v(s)|.
template <typename Scalar, typename Derived>
Scalar bellman_residual(const CmdpT<Scalar>& cmdp, const Eigen::MatrixBase<Derived>& signal, const VectorX<Scalar>& values) {
  const MatrixX<Scalar> q = action_values(cmdp, signal, values);
  return (q.rowwise().maxCoeff() - values).cwiseAbs().maxCoeff();
}

template <typename Scalar>
struct GreedySolution {
  TabularPolicyT<Scalar> policy;
  std::vector<int> actions;
  Scalar value = Scalar(0);
  VectorX<Scalar> state_values;
  Scalar residual = Scalar(0);
  int iterations = 0;
};

/// Optimal deterministic policy for `signal` and its value from the initial
/// distribution.
///
/// Howard policy iteration drives the values to the optimal fixed point (each
/// evaluation is a direct solve), then plain Bellman sweeps run until the
/// sup-norm residual drops below `tolerance` (scaled by max |f| when that exceeds 1) if it has not already. The
/// returned policy is greedy for the final values with lowest-index
/// tie-breaking, so identical inputs give identical policies.
template <typename Scalar, typename Derived>
GreedySolution<Scalar> value_iteration(const CmdpT<Scalar>& cmdp, const Eigen::MatrixBase<Derived>& signal,
                                       double tolerance = 1e-10) {
  require_finite_signal(cmdp, signal);
  const Index S = cmdp.num_states();
  const Index A = cmdp.num_actions();
  const MatrixX<Scalar> f = signal;

  std::vector<int> actions(static_cast<std::size_t>(S), 0);
  VectorX<Scalar> values = state_values(cmdp, TabularPolicyT<Scalar>::deterministic(actions, A), f);
  int iterations = 0;
  const int max_policy_iterations = 100 + 10 * static_cast<int>(S * A);
  for (; iterations < max_policy_iterations; ++iterations) {
    const MatrixX<Scalar> q = action_values(cmdp, f, values);
    bool changed = false;
    for (Index s = 0; s < S; ++s) {
      const auto current = actions[static_cast<std::size_t>(s)];
      const double top = static_cast<double>(q.row(s).maxCoeff());
      const double band = kTieTolerance * (1.0 + std::abs(top));
      // Only switch on a strict improvement, which rules out cycling.
      if (static_cast<double>(q(s, current)) < top - band) {
        actions[static_cast<std::size_t>(s)] = greedy_action(q.row(s));
        changed = true;
      }
    }
    if (!changed) break;
    values = state_values(cmdp, TabularPolicyT<Scalar>::deterministic(actions, A), f);
  }

  // Relative to the signal scale; an absolute floor is unreachable in
  // floating point once |f| is large.
  const double stop = tolerance * std::max(1.0, static_cast<double>(f.cwiseAbs().maxCoeff()));
  Scalar residual = bellman_residual(cmdp, f, values);
  while (static_cast<double>(residual) >= stop) {
    const MatrixX<Scalar> q = action_values(cmdp, f, values);
    VectorX<Scalar> next = q.rowwise().maxCoeff();
    residual = (next - values).cwiseAbs().maxCoeff();
    values = std::move(next);
    ++iterations;
  }

  GreedySolution<Scalar> out;
  out.actions = greedy_actions(action_values(cmdp, f, values));
  out.policy = TabularPolicyT<Scalar>::deterministic(out.actions, A);
  out.state_values = state_values(cmdp, out.policy, f);
  out.value = cmdp.initial_dist.dot(out.state_values);
  out.residual = bellman_residual(cmdp, f, out.state_values);
  out.iterations = iterations;
  return out;
}

}  // namespace o3srl
