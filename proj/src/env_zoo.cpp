#include "o3srl/env_zoo.hpp"

#include "o3srl/rng.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <numeric>
#include <string>

namespace o3srl {

namespace {

constexpr std::array<Cell, 4> kMoves{{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};

bool contains(const std::vector<Cell>& cells, Cell c) { return std::find(cells.begin(), cells.end(), c) != cells.end(); }

void require_in_bounds(const GridworldSpec& spec, const std::vector<Cell>& cells, const char* what) {
  for (const Cell& c : cells) {
    if (c.x < 0 || c.y < 0 || c.x >= spec.width || c.y >= spec.height) {
      throw ValidationError(std::string("gridworld: ") + what + " cell (" + std::to_string(c.x) + ", " +
                            std::to_string(c.y) + ") out of bounds");
    }
  }
}

}  // namespace

Cmdp make_gridworld(const GridworldSpec& spec) {
  if (spec.width <= 0 || spec.height <= 0) throw ValidationError("gridworld: width and height must be positive");
  if (!(spec.slip_prob >= 0.0 && spec.slip_prob < 1.0)) throw ValidationError("gridworld: slip_prob must lie in [0, 1)");
  if (spec.goal_cells.empty()) throw ValidationError("gridworld: at least one goal cell required");
  require_in_bounds(spec, spec.hazard_cells, "hazard");
  require_in_bounds(spec, spec.goal_cells, "goal");
  require_in_bounds(spec, spec.wall_cells, "wall");
  require_in_bounds(spec, spec.start_cells, "start");
  const std::vector<Cell> starts = spec.start_cells.empty() ? std::vector<Cell>{{0, 0}} : spec.start_cells;
  for (const Cell& c : starts) {
    if (contains(spec.wall_cells, c)) throw ValidationError("gridworld: start cell inside a wall");
  }

  const int cells = spec.width * spec.height;
  const int terminal = cells;
  const Index S = cells + 1;
  const Index A = 4;

  Cmdp cmdp;
  cmdp.gamma = spec.gamma;
  cmdp.cost_limit = spec.kappa;
  cmdp.transition.assign(A, Eigen::MatrixXd::Zero(S, S));
  cmdp.reward = Eigen::MatrixXd::Zero(S, A);
  cmdp.cost = Eigen::MatrixXd::Zero(S, A);
  cmdp.initial_dist = Eigen::VectorXd::Zero(S);
  for (const Cell& c : starts) cmdp.initial_dist(cell_index(spec, c)) += 1.0 / static_cast<double>(starts.size());

  auto destination = [&](Cell from, int dir) {
    const Cell to{from.x + kMoves[static_cast<std::size_t>(dir)].x, from.y + kMoves[static_cast<std::size_t>(dir)].y};
    if (to.x < 0 || to.y < 0 || to.x >= spec.width || to.y >= spec.height || contains(spec.wall_cells, to)) return from;
    return to;
  };

  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const Cell here{x, y};
      const int s = cell_index(spec, here);
      for (int a = 0; a < A; ++a) {
        auto& P = cmdp.transition[static_cast<std::size_t>(a)];
        if (contains(spec.wall_cells, here)) {
          P(s, s) = 1.0;
        } else if (contains(spec.goal_cells, here)) {
          P(s, terminal) = 1.0;
          cmdp.reward(s, a) = spec.goal_reward;
        } else {
          for (int dir = 0; dir < 4; ++dir) {
            const double p = (dir == a ? 1.0 - spec.slip_prob : 0.0) + spec.slip_prob / 4.0;
            if (p == 0.0) continue;
            const Cell to = destination(here, dir);
            P(s, cell_index(spec, to)) += p;
            if (contains(spec.hazard_cells, to)) cmdp.cost(s, a) += p;
          }
        }
      }
    }
  }
  for (int a = 0; a < A; ++a) cmdp.transition[static_cast<std::size_t>(a)](terminal, terminal) = 1.0;

  // Some goal must be reachable from the start distribution.
  std::vector<char> seen(static_cast<std::size_t>(S), 0);
  std::deque<Index> frontier;
  for (Index s = 0; s < S; ++s) {
    if (cmdp.initial_dist(s) > 0.0) {
      seen[static_cast<std::size_t>(s)] = 1;
      frontier.push_back(s);
    }
  }
  bool reached = false;
  while (!frontier.empty() && !reached) {
    const Index s = frontier.front();
    frontier.pop_front();
    if (s < cells && contains(spec.goal_cells, Cell{static_cast<int>(s % spec.width), static_cast<int>(s / spec.width)})) {
      reached = true;
      break;
    }
    for (Index a = 0; a < A; ++a) {
      for (Index t = 0; t < S; ++t) {
        if (cmdp.transition[static_cast<std::size_t>(a)](s, t) > 0.0 && !seen[static_cast<std::size_t>(t)]) {
          seen[static_cast<std::size_t>(t)] = 1;
          frontier.push_back(t);
        }
      }
    }
  }
  if (!reached) throw ValidationError("gridworld: no goal cell is reachable from the start cells");

  cmdp.validate();
  return cmdp;
}

Cmdp make_garnet(const GarnetSpec& spec) {
  if (spec.num_states <= 0 || spec.num_actions <= 0) throw ValidationError("garnet: sizes must be positive");
  if (spec.branching_factor <= 0 || spec.branching_factor > spec.num_states) {
    throw ValidationError("garnet: branching factor must lie in [1, num_states]");
  }
  if (!(spec.cost_density >= 0.0 && spec.cost_density <= 1.0)) throw ValidationError("garnet: cost_density must lie in [0, 1]");
  if (!(spec.reward_scale > 0.0)) throw ValidationError("garnet: reward_scale must be positive");

  const Index S = spec.num_states;
  const Index A = spec.num_actions;
  Rng rng(derive_seed(spec.seed, Stream::instance));

  Cmdp cmdp;
  cmdp.gamma = spec.gamma;
  cmdp.cost_limit = spec.kappa;
  cmdp.transition.assign(static_cast<std::size_t>(A), Eigen::MatrixXd::Zero(S, S));
  cmdp.reward = Eigen::MatrixXd::Zero(S, A);
  cmdp.cost = Eigen::MatrixXd::Zero(S, A);
  cmdp.initial_dist = Eigen::VectorXd::Constant(S, 1.0 / static_cast<double>(S));

  std::vector<int> states(static_cast<std::size_t>(S));
  for (Index s = 0; s < S; ++s) {
    for (Index a = 0; a < A; ++a) {
      // Partial Fisher-Yates picks the successors without replacement.
      std::iota(states.begin(), states.end(), 0);
      for (int k = 0; k < spec.branching_factor; ++k) {
        const std::size_t j = static_cast<std::size_t>(k) + rng.below(static_cast<std::size_t>(S - k));
        std::swap(states[static_cast<std::size_t>(k)], states[j]);
      }
      std::vector<double> mass(static_cast<std::size_t>(spec.branching_factor));
      for (double& m : mass) m = 1.0 - rng.uniform();  // (0, 1]
      const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
      auto& P = cmdp.transition[static_cast<std::size_t>(a)];
      for (int k = 0; k < spec.branching_factor; ++k) {
        P(s, states[static_cast<std::size_t>(k)]) = mass[static_cast<std::size_t>(k)] / total;
      }
      cmdp.reward(s, a) = rng.uniform(0.0, spec.reward_scale);
      const bool costly = rng.uniform() < spec.cost_density;
      const double magnitude = rng.uniform();
      cmdp.cost(s, a) = costly ? magnitude : 0.0;
    }
  }
  cmdp.validate();
  return cmdp;
}

}  // namespace o3srl
