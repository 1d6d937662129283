#pragma once

#include "o3srl/offline_data.hpp"
#include "o3srl/planning.hpp"
#include "o3srl/rng.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace o3srl {

/// Maximum-likelihood tabular model fitted from an offline dataset.
///
/// `model` holds the plug-in estimates. A (state, action) pair that never
/// appears in the data is routed to a self-loop; planning signals give it the
/// smallest observed signal value minus one, so any policy that relies on it
/// is dominated.
struct EmpiricalModel {
  Eigen::MatrixXi counts;
  Cmdp model;
  double pessimism = 0.0;
  /// successors[s * A + a] lists (next_state, probability) with nonzero mass.
  std::vector<std::vector<std::pair<int, double>>> successors;

  Index num_states() const { return model.num_states(); }
  Index num_actions() const { return model.num_actions(); }
  bool visited(Index s, Index a) const { return counts(s, a) > 0; }
  std::size_t sample_size() const { return static_cast<std::size_t>(counts.sum()); }

  /// r_hat - lambda (c_hat - (1 - gamma) kappa).
  Eigen::MatrixXd relabeled_signal(double lambda) const;

  /// `signal` with unvisited pairs set to (min over visited) - 1.
  Eigen::MatrixXd with_sink(const Eigen::MatrixXd& signal) const;

  /// with_sink(signal) minus pessimism / sqrt(max(count, 1)) on visited pairs.
  Eigen::MatrixXd penalized(const Eigen::MatrixXd& signal) const;
};

/// Fits transition, reward and cost estimates. The initial distribution is
/// the empirical distribution of episode start states unless given.
EmpiricalModel fit_empirical_mdp(const OfflineDataset& dataset, Index num_states, Index num_actions, double gamma,
                                 double kappa, double pessimism = 0.0,
                                 std::optional<Eigen::VectorXd> initial_dist = std::nullopt);

struct OracleOutput {
  TabularPolicy policy;
  std::vector<int> actions;
  /// Reported value: exact_value_on_empirical plus optional zero-mean noise.
  double v_tilde = 0.0;
  /// Value of `policy` on the empirical model under the unpenalized signal.
  double exact_value_on_empirical = 0.0;
  /// Optimal value of the penalized planning problem.
  double penalized_value = 0.0;
};

struct OracleNoise {
  double std_dev = 0.0;
  Rng* rng = nullptr;
};

/// Pessimistic plug-in oracle: plans on the penalized signal and reports the
/// policy's value under the plain one.
OracleOutput oracle_solve(const EmpiricalModel& model, const Eigen::MatrixXd& signal, OracleNoise noise = {});

/// Warm-started Q-table that advances by a fixed number of Bellman
/// optimality sweeps per call. Single owner; not thread-safe.
class TruncatedSolver {
 public:
  explicit TruncatedSolver(const EmpiricalModel& model);

  /// Runs exactly `sweeps` sweeps on the penalized signal and returns the
  /// greedy actions of the resulting Q-table.
  std::vector<int> update(const Eigen::MatrixXd& signal, int sweeps);

  TabularPolicy policy() const;
  const Eigen::MatrixXd& q_table() const { return q_; }
  /// sup |Q_k - Q_{k-1}| over the last sweep of the latest call.
  double last_residual() const { return residual_; }

 private:
  const EmpiricalModel* model_;
  Eigen::MatrixXd q_;
  Eigen::MatrixXd next_;
  double residual_ = 0.0;
};

}  // namespace o3srl
