#pragma once

#include "o3srl/mixture.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace o3srl {

class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Per-step signal r - lambda (c - (1 - gamma) kappa). Its discounted value is
/// the Lagrangian V_r - lambda (V_c - kappa).
template <typename DerivedR, typename DerivedC>
auto relabeled_signal(const Eigen::MatrixBase<DerivedR>& reward, const Eigen::MatrixBase<DerivedC>& cost,
                      double lambda, double kappa, double gamma) {
  using Scalar = typename DerivedR::Scalar;
  return (reward.array() - Scalar(lambda) * (cost.array() - Scalar((1.0 - gamma) * kappa))).matrix();
}

template <typename Scalar>
MatrixX<Scalar> relabeled_signal(const CmdpT<Scalar>& cmdp, double lambda) {
  return relabeled_signal(cmdp.reward, cmdp.cost, lambda, static_cast<double>(cmdp.cost_limit),
                          static_cast<double>(cmdp.gamma));
}

struct LagrangianEval {
  double value_reward = 0.0;
  double value_cost = 0.0;
  double lagrangian = 0.0;
  double lambda = 0.0;
  /// Value of the mixture under the relabeled per-step signal.
  double relabeled_value = 0.0;
};

/// L(D, lambda) computed twice: from (V_r, V_c) and from the relabeled
/// signal. A disagreement beyond 1e-6 is a bug and throws.
template <typename Scalar>
LagrangianEval lagrangian(const CmdpT<Scalar>& cmdp, const PolicyMixtureT<Scalar>& mixture, double lambda) {
  if (!(lambda >= 0.0)) throw ValidationError("lagrangian: lambda must be nonnegative");
  LagrangianEval out;
  out.lambda = lambda;
  out.value_reward = static_cast<double>(mixture.value(cmdp, cmdp.reward));
  out.value_cost = static_cast<double>(mixture.value(cmdp, cmdp.cost));
  out.lagrangian = out.value_reward - lambda * (out.value_cost - static_cast<double>(cmdp.cost_limit));
  out.relabeled_value = static_cast<double>(mixture.value(cmdp, relabeled_signal(cmdp, lambda)));
  if (std::abs(out.lagrangian - out.relabeled_value) > 1e-6) {
    throw ConsistencyError("lagrangian: direct and relabeled evaluations disagree (" + std::to_string(out.lagrangian) +
                           " vs " + std::to_string(out.relabeled_value) + ")");
  }
  return out;
}

}  // namespace o3srl
