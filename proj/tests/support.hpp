#pragma once

#include "o3srl/env_zoo.hpp"
#include "o3srl/planning.hpp"
#include "o3srl/rng.hpp"

#include <vector>

namespace o3srl::test {

inline Cmdp garnet(std::uint64_t seed, int S, int A, double gamma = 0.9, int branching = 2, double kappa = 0.0) {
  GarnetSpec spec;
  spec.num_states = S;
  spec.num_actions = A;
  spec.branching_factor = branching;
  spec.seed = seed;
  spec.gamma = gamma;
  spec.kappa = kappa;
  return make_garnet(spec);
}

/// Random stochastic policy with Dirichlet(1)-like rows.
inline TabularPolicy random_policy(Rng& rng, Index S, Index A) {
  Eigen::MatrixXd probs(S, A);
  for (Index s = 0; s < S; ++s) {
    for (Index a = 0; a < A; ++a) probs(s, a) = -std::log(1.0 - rng.uniform());
    probs.row(s) /= probs.row(s).sum();
  }
  return TabularPolicy(probs);
}

inline Eigen::MatrixXd random_signal(Rng& rng, Index S, Index A) {
  Eigen::MatrixXd f(S, A);
  for (Index s = 0; s < S; ++s)
    for (Index a = 0; a < A; ++a) f(s, a) = rng.uniform(-1.0, 1.0);
  return f;
}

/// Every deterministic policy as an action vector, in odometer order.
inline std::vector<std::vector<int>> all_deterministic(Index S, Index A) {
  std::vector<std::vector<int>> out;
  std::vector<int> actions(static_cast<std::size_t>(S), 0);
  while (true) {
    out.push_back(actions);
    std::size_t i = 0;
    while (i < actions.size() && ++actions[i] == A) actions[i++] = 0;
    if (i == actions.size()) return out;
  }
}

/// Chain where every action moves s -> s + 1 until the last state, which absorbs.
inline Cmdp chain(int S, double gamma) {
  Cmdp m;
  m.gamma = gamma;
  m.transition.assign(1, Eigen::MatrixXd::Zero(S, S));
  for (int s = 0; s < S; ++s) m.transition[0](s, std::min(s + 1, S - 1)) = 1.0;
  m.reward = Eigen::MatrixXd::Zero(S, 1);
  m.cost = Eigen::MatrixXd::Zero(S, 1);
  m.initial_dist = Eigen::VectorXd::Unit(S, 0);
  return m;
}

}  // namespace o3srl::test
