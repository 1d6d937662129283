#pragma once

#include "o3srl/cmdp.hpp"
#include "o3srl/io.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace o3srl {

struct Transition {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  double cost = 0.0;
  int next_state = 0;
  bool operator==(const Transition&) const = default;
};

/// Logged transitions plus provenance. Episodes are stored back to back, each
/// `horizon_used` transitions long.
struct OfflineDataset {
  std::vector<Transition> transitions;
  std::uint64_t source_seed = 0;
  std::string behavior_desc;
  int horizon_used = 0;

  std::size_t size() const { return transitions.size(); }

  /// Throws ValidationError if empty, an index is out of range, or a cost is negative.
  void validate(Index num_states, Index num_actions) const;
};

/// Simulates `num_episodes` episodes of `horizon` steps from the initial
/// distribution. Deterministic given `seed`.
OfflineDataset rollout_dataset(const Cmdp& cmdp, const TabularPolicy& behavior, int num_episodes, int horizon,
                               std::uint64_t seed, std::string behavior_desc = "");

/// r'_i = r_i - lambda (c_i - (1 - gamma) kappa), aligned with the transitions.
Eigen::VectorXd relabel(const OfflineDataset& dataset, double lambda, double kappa, double gamma);

/// Percentile with linear interpolation between order statistics:
/// position (tau / 100)(n - 1) in the sorted sample.
double percentile(std::vector<double> values, double tau);

/// Clips rewards to +-percentile(|r|, tau) and scales by 0.9 / that bound.
OfflineDataset clip_scale_rewards(const OfflineDataset& dataset, double tau);

/// Smallest horizon h with gamma^h < tolerance.
int default_horizon(double gamma, double tolerance = 1e-6);

std::string dataset_to_csv(const OfflineDataset& dataset);
/// Metadata is not carried by CSV; it is left default.
OfflineDataset dataset_from_csv(const std::string& text);

Json dataset_to_json(const OfflineDataset& dataset);
OfflineDataset dataset_from_json(const Json& doc);

}  // namespace o3srl
