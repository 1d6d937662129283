#include "o3srl/offline_oracle.hpp"

#include "o3srl/lagrangian.hpp"

#include <cmath>
#include <limits>

namespace o3srl {

Eigen::MatrixXd EmpiricalModel::relabeled_signal(double lambda) const {
  return o3srl::relabeled_signal(model.reward, model.cost, lambda, model.cost_limit, model.gamma);
}

Eigen::MatrixXd EmpiricalModel::with_sink(const Eigen::MatrixXd& signal) const {
  double lowest = std::numeric_limits<double>::infinity();
  for (Index s = 0; s < num_states(); ++s) {
    for (Index a = 0; a < num_actions(); ++a) {
      if (visited(s, a)) lowest = std::min(lowest, signal(s, a));
    }
  }
  Eigen::MatrixXd out = signal;
  for (Index s = 0; s < num_states(); ++s) {
    for (Index a = 0; a < num_actions(); ++a) {
      if (!visited(s, a)) out(s, a) = lowest - 1.0;
    }
  }
  return out;
}

Eigen::MatrixXd EmpiricalModel::penalized(const Eigen::MatrixXd& signal) const {
  Eigen::MatrixXd out = with_sink(signal);
  if (pessimism == 0.0) return out;
  for (Index s = 0; s < num_states(); ++s) {
    for (Index a = 0; a < num_actions(); ++a) {
      if (visited(s, a)) out(s, a) -= pessimism / std::sqrt(static_cast<double>(counts(s, a)));
    }
  }
  return out;
}

EmpiricalModel fit_empirical_mdp(const OfflineDataset& dataset, Index num_states, Index num_actions, double gamma,
                                 double kappa, double pessimism, std::optional<Eigen::VectorXd> initial_dist) {
  dataset.validate(num_states, num_actions);
  if (!(pessimism >= 0.0)) throw ValidationError("empirical model: pessimism must be nonnegative");
  const Index S = num_states;
  const Index A = num_actions;

  EmpiricalModel em;
  em.pessimism = pessimism;
  em.counts = Eigen::MatrixXi::Zero(S, A);
  Cmdp& m = em.model;
  m.gamma = gamma;
  m.cost_limit = kappa;
  m.transition.assign(static_cast<std::size_t>(A), Eigen::MatrixXd::Zero(S, S));
  m.reward = Eigen::MatrixXd::Zero(S, A);
  m.cost = Eigen::MatrixXd::Zero(S, A);

  for (const Transition& t : dataset.transitions) {
    em.counts(t.state, t.action) += 1;
    m.transition[static_cast<std::size_t>(t.action)](t.state, t.next_state) += 1.0;
    m.reward(t.state, t.action) += t.reward;
    m.cost(t.state, t.action) += t.cost;
  }
  em.successors.assign(static_cast<std::size_t>(S * A), {});
  for (Index s = 0; s < S; ++s) {
    for (Index a = 0; a < A; ++a) {
      auto& P = m.transition[static_cast<std::size_t>(a)];
      auto& succ = em.successors[static_cast<std::size_t>(s * A + a)];
      const int n = em.counts(s, a);
      if (n == 0) {
        P(s, s) = 1.0;
        succ.emplace_back(static_cast<int>(s), 1.0);
        continue;
      }
      P.row(s) /= static_cast<double>(n);
      m.reward(s, a) /= static_cast<double>(n);
      m.cost(s, a) /= static_cast<double>(n);
      for (Index t = 0; t < S; ++t) {
        if (P(s, t) > 0.0) succ.emplace_back(static_cast<int>(t), P(s, t));
      }
    }
  }

  if (initial_dist) {
    m.initial_dist = *initial_dist;
  } else {
    m.initial_dist = Eigen::VectorXd::Zero(S);
    const std::size_t stride = dataset.horizon_used > 0 ? static_cast<std::size_t>(dataset.horizon_used) : 1;
    std::size_t starts = 0;
    for (std::size_t i = 0; i < dataset.size(); i += stride) {
      m.initial_dist(dataset.transitions[i].state) += 1.0;
      ++starts;
    }
    m.initial_dist /= static_cast<double>(starts);
  }
  m.validate(1e-9);
  return em;
}

OracleOutput oracle_solve(const EmpiricalModel& model, const Eigen::MatrixXd& signal, OracleNoise noise) {
  require_finite_signal(model.model, signal);
  const Eigen::MatrixXd plain = model.with_sink(signal);
  const auto greedy = value_iteration(model.model, model.pessimism == 0.0 ? plain : model.penalized(signal));

  OracleOutput out;
  out.actions = greedy.actions;
  out.policy = greedy.policy;
  out.penalized_value = greedy.value;
  out.exact_value_on_empirical =
      model.pessimism == 0.0 ? greedy.value : model.model.initial_dist.dot(state_values(model.model, greedy.policy, plain));
  out.v_tilde = out.exact_value_on_empirical;
  if (noise.std_dev > 0.0) {
    if (noise.rng == nullptr) throw ValidationError("oracle: noise requested without a random stream");
    out.v_tilde += noise.std_dev * noise.rng->normal();
  }
  return out;
}

TruncatedSolver::TruncatedSolver(const EmpiricalModel& model)
    : model_(&model),
      q_(Eigen::MatrixXd::Zero(model.num_states(), model.num_actions())),
      next_(q_.rows(), q_.cols()) {}

std::vector<int> TruncatedSolver::update(const Eigen::MatrixXd& signal, int sweeps) {
  if (sweeps < 1) throw ValidationError("truncated update: at least one sweep required");
  require_finite_signal(model_->model, signal);
  const Eigen::MatrixXd f = model_->penalized(signal);
  const Index S = q_.rows();
  const Index A = q_.cols();
  const double gamma = model_->model.gamma;
  Eigen::VectorXd v(S);

  for (int k = 0; k < sweeps; ++k) {
    v = q_.rowwise().maxCoeff();
    for (Index s = 0; s < S; ++s) {
      for (Index a = 0; a < A; ++a) {
        double expected = 0.0;
        for (const auto& [t, p] : model_->successors[static_cast<std::size_t>(s * A + a)]) expected += p * v(t);
        next_(s, a) = f(s, a) + gamma * expected;
      }
    }
    residual_ = (next_ - q_).cwiseAbs().maxCoeff();
    q_.swap(next_);
    // At a bitwise fixed point the remaining sweeps would change nothing.
    if (residual_ == 0.0) break;
  }
  return greedy_actions(q_);
}

TabularPolicy TruncatedSolver::policy() const {
  return TabularPolicy::deterministic(greedy_actions(q_), q_.cols());
}

}  // namespace o3srl
