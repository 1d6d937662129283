#pragma once

#include "o3srl/planning.hpp"

#include <utility>
#include <vector>

namespace o3srl {

/// Distribution over tabular policies.
///
/// Values are linear in the occupancy measure, so the mixture is carried by
/// its mean occupancy; `support` keeps the component policies with weights for
/// inspection and sampling. When `trimmed` is set the support is a thinned
/// sample and its weights are not exact.
template <typename Scalar>
struct PolicyMixtureT {
  MatrixX<Scalar> mean_occupancy;
  std::vector<std::pair<TabularPolicyT<Scalar>, Scalar>> support;
  std::size_t count = 0;
  bool trimmed = false;

  static PolicyMixtureT single(const CmdpT<Scalar>& cmdp, const TabularPolicyT<Scalar>& policy) {
    PolicyMixtureT m;
    m.mean_occupancy = occupancy_measure(cmdp, policy);
    m.support.emplace_back(policy, Scalar(1));
    m.count = 1;
    return m;
  }

  /// weight * first + (1 - weight) * second.
  static PolicyMixtureT blend(const CmdpT<Scalar>& cmdp, const TabularPolicyT<Scalar>& first,
                              const TabularPolicyT<Scalar>& second, Scalar weight) {
    if (weight >= Scalar(1)) return single(cmdp, first);
    if (weight <= Scalar(0)) return single(cmdp, second);
    PolicyMixtureT m;
    m.mean_occupancy = weight * occupancy_measure(cmdp, first) + (Scalar(1) - weight) * occupancy_measure(cmdp, second);
    m.support.emplace_back(first, weight);
    m.support.emplace_back(second, Scalar(1) - weight);
    m.count = 2;
    return m;
  }

  template <typename Derived>
  Scalar value(const CmdpT<Scalar>& cmdp, const Eigen::MatrixBase<Derived>& signal) const {
    return occupancy_value(cmdp, mean_occupancy, signal);
  }

  /// Weight-average of per-policy values; equals value() up to solver error
  /// when the support is untrimmed.
  template <typename Derived>
  Scalar support_value(const CmdpT<Scalar>& cmdp, const Eigen::MatrixBase<Derived>& signal) const {
    Scalar total = Scalar(0);
    Scalar weights = Scalar(0);
    for (const auto& [policy, w] : support) {
      total += w * policy_evaluation(cmdp, policy, signal);
      weights += w;
    }
    return weights > Scalar(0) ? total / weights : Scalar(0);
  }

  void validate(double tol = 1e-9) const {
    if (mean_occupancy.size() == 0) throw ValidationError("mixture: empty occupancy");
    if ((mean_occupancy.array() < Scalar(-tol)).any()) throw ValidationError("mixture: negative occupancy");
    if (std::abs(static_cast<double>(mean_occupancy.sum()) - 1.0) > tol) throw ValidationError("mixture: occupancy does not sum to 1");
    if (!trimmed && !support.empty()) {
      Scalar total = Scalar(0);
      for (const auto& entry : support) total += entry.second;
      if (std::abs(static_cast<double>(total) - 1.0) > tol) throw ValidationError("mixture: support weights do not sum to 1");
    }
  }
};

using PolicyMixture = PolicyMixtureT<double>;

}  // namespace o3srl
