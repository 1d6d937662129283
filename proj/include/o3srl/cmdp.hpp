#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace o3srl {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Raised when an input violates a documented invariant.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when no policy satisfies the cost limit.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename Derived>
void require_probability_rows(const Eigen::MatrixBase<Derived>& rows, double tol, const std::string& what) {
  for (Index i = 0; i < rows.rows(); ++i) {
    double sum = 0.0;
    for (Index j = 0; j < rows.cols(); ++j) {
      const double p = static_cast<double>(rows(i, j));
      if (!std::isfinite(p) || p < 0.0) {
        throw ValidationError(what + ": row " + std::to_string(i) + " has a negative or non-finite entry");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > tol) {
      throw ValidationError(what + ": row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
  }
}

}  // namespace detail

/// Tabular constrained MDP.
///
/// `transition[a](s, s')` is the probability of moving to s' after taking a in
/// s. Rewards and costs are expected per-step signals indexed (state, action).
template <typename Scalar>
struct CmdpT {
  std::vector<MatrixX<Scalar>> transition;
  MatrixX<Scalar> reward;
  MatrixX<Scalar> cost;
  Scalar gamma = Scalar(0.99);
  VectorX<Scalar> initial_dist;
  Scalar cost_limit = Scalar(0);

  Index num_states() const { return reward.rows(); }
  Index num_actions() const { return reward.cols(); }

  /// Effective horizon 1 / (1 - gamma).
  Scalar horizon() const { return Scalar(1) / (Scalar(1) - gamma); }

  /// Throws ValidationError on the first violated invariant.
  void validate(double tol = 1e-12) const {
    const Index S = num_states();
    const Index A = num_actions();
    if (S <= 0 || A <= 0) throw ValidationError("cmdp: empty state or action set");
    if (cost.rows() != S || cost.cols() != A) throw ValidationError("cmdp: cost table shape mismatch");
    if (static_cast<Index>(transition.size()) != A) throw ValidationError("cmdp: one transition matrix per action required");
    for (Index a = 0; a < A; ++a) {
      const auto& P = transition[static_cast<std::size_t>(a)];
      if (P.rows() != S || P.cols() != S) throw ValidationError("cmdp: transition matrix shape mismatch");
      detail::require_probability_rows(P, tol, "cmdp transition (action " + std::to_string(a) + ")");
    }
    if (initial_dist.size() != S) throw ValidationError("cmdp: initial distribution size mismatch");
    detail::require_probability_rows(initial_dist.transpose(), tol, "cmdp initial distribution");
    if (!reward.allFinite()) throw ValidationError("cmdp: non-finite reward");
    if (!cost.allFinite() || (cost.array() < Scalar(0)).any()) throw ValidationError("cmdp: costs must be finite and nonnegative");
    if (!(gamma > Scalar(0) && gamma < Scalar(1))) throw ValidationError("cmdp: discount must lie in (0, 1)");
    if (!(cost_limit >= Scalar(0)) || !std::isfinite(static_cast<double>(cost_limit))) {
      throw ValidationError("cmdp: cost limit must be nonnegative");
    }
  }
};

/// Stochastic tabular policy; row s is the action distribution in state s.
template <typename Scalar>
struct TabularPolicyT {
  MatrixX<Scalar> action_probs;

  TabularPolicyT() = default;
  explicit TabularPolicyT(MatrixX<Scalar> probs) : action_probs(std::move(probs)) {}

  Index num_states() const { return action_probs.rows(); }
  Index num_actions() const { return action_probs.cols(); }

  static TabularPolicyT uniform(Index num_states, Index num_actions) {
    return TabularPolicyT(MatrixX<Scalar>::Constant(num_states, num_actions, Scalar(1) / Scalar(num_actions)));
  }

  static TabularPolicyT deterministic(const std::vector<int>& actions, Index num_actions) {
    MatrixX<Scalar> probs = MatrixX<Scalar>::Zero(static_cast<Index>(actions.size()), num_actions);
    for (std::size_t s = 0; s < actions.size(); ++s) {
      if (actions[s] < 0 || actions[s] >= num_actions) throw ValidationError("policy: action index out of range");
      probs(static_cast<Index>(s), actions[s]) = Scalar(1);
    }
    return TabularPolicyT(std::move(probs));
  }

  /// Action chosen in each state if every row is one-hot; empty otherwise.
  std::vector<int> deterministic_actions() const {
    std::vector<int> actions(static_cast<std::size_t>(num_states()));
    for (Index s = 0; s < num_states(); ++s) {
      Index best = 0;
      const Scalar top = action_probs.row(s).maxCoeff(&best);
      if (top != Scalar(1)) return {};
      actions[static_cast<std::size_t>(s)] = static_cast<int>(best);
    }
    return actions;
  }

  void validate(double tol = 1e-12) const {
    if (action_probs.size() == 0) throw ValidationError("policy: empty table");
    detail::require_probability_rows(action_probs, tol, "policy");
  }

  void validate_for(const CmdpT<Scalar>& cmdp, double tol = 1e-12) const {
    if (num_states() != cmdp.num_states() || num_actions() != cmdp.num_actions()) {
      throw ValidationError("policy: shape does not match cmdp");
    }
    validate(tol);
  }

  bool operator==(const TabularPolicyT& other) const { return action_probs == other.action_probs; }
};

using Cmdp = CmdpT<double>;
using TabularPolicy = TabularPolicyT<double>;

}  // namespace o3srl
