#include "o3srl/env_zoo.hpp"
#include "o3srl/exact_solver.hpp"
#include "o3srl/io.hpp"
#include "support.hpp"

#include <doctest.h>

#include <deque>

using namespace o3srl;

namespace {

/// Moves needed to reach each cell from `start` on an open grid with walls.
std::vector<int> bfs_moves(const GridworldSpec& spec, Cell start) {
  std::vector<int> dist(static_cast<std::size_t>(spec.width * spec.height), -1);
  std::deque<Cell> queue{start};
  dist[static_cast<std::size_t>(cell_index(spec, start))] = 0;
  const int dx[] = {0, 1, 0, -1};
  const int dy[] = {-1, 0, 1, 0};
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (int k = 0; k < 4; ++k) {
      const Cell n{c.x + dx[k], c.y + dy[k]};
      if (n.x < 0 || n.y < 0 || n.x >= spec.width || n.y >= spec.height) continue;
      if (std::find(spec.wall_cells.begin(), spec.wall_cells.end(), n) != spec.wall_cells.end()) continue;
      auto& d = dist[static_cast<std::size_t>(cell_index(spec, n))];
      if (d < 0) {
        d = dist[static_cast<std::size_t>(cell_index(spec, c))] + 1;
        queue.push_back(n);
      }
    }
  }
  return dist;
}

}  // namespace

TEST_CASE("gridworld 1x2: goal one step away is worth gamma") {
  GridworldSpec spec;
  spec.width = 2;
  spec.height = 1;
  spec.goal_cells = {{1, 0}};
  spec.gamma = 0.9;
  const Cmdp m = make_gridworld(spec);
  CHECK(m.num_states() == 3);
  CHECK(m.num_actions() == 4);
  const auto sol = value_iteration(m, m.reward);
  CHECK(sol.value == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(sol.actions[0] == static_cast<int>(GridAction::east));
}

TEST_CASE("gridworld slip 0 is deterministic") {
  GridworldSpec spec;
  spec.width = 4;
  spec.height = 3;
  spec.goal_cells = {{3, 2}};
  spec.hazard_cells = {{1, 1}};
  spec.wall_cells = {{2, 0}};
  const Cmdp m = make_gridworld(spec);
  for (const auto& P : m.transition) {
    for (Index s = 0; s < m.num_states(); ++s) {
      CHECK(P.row(s).maxCoeff() == 1.0);
      CHECK(P.row(s).sum() == 1.0);
    }
  }
}

TEST_CASE("gridworld hazard cost is the probability of landing on a hazard") {
  GridworldSpec spec;
  spec.width = 3;
  spec.height = 1;
  spec.goal_cells = {{2, 0}};
  spec.hazard_cells = {{1, 0}};
  spec.slip_prob = 0.2;
  const Cmdp m = make_gridworld(spec);
  // From (0, 0): east lands on the hazard with 0.8 + 0.05; other actions only by slipping east.
  CHECK(m.cost(0, static_cast<int>(GridAction::east)) == doctest::Approx(0.85).epsilon(1e-12));
  CHECK(m.cost(0, static_cast<int>(GridAction::north)) == doctest::Approx(0.05).epsilon(1e-12));
  // Walls and edges reflect: north from (0, 0) stays put with 0.8 + 3 * 0.05.
  CHECK(m.transition[static_cast<int>(GridAction::north)](0, 0) == doctest::Approx(0.95).epsilon(1e-12));
}

TEST_CASE("gridworld corridor: unconstrained value matches shortest-path oracle") {
  GridworldSpec spec;
  spec.width = 5;
  spec.height = 5;
  spec.goal_cells = {{4, 4}};
  spec.wall_cells = {{1, 1}, {2, 1}, {3, 1}, {1, 3}, {2, 3}, {3, 3}};
  spec.gamma = 0.95;
  spec.goal_reward = 2.0;
  for (const Cell start : {Cell{0, 0}, Cell{4, 0}, Cell{2, 2}, Cell{0, 4}}) {
    spec.start_cells = {start};
    const Cmdp m = make_gridworld(spec);
    const int d = bfs_moves(spec, start)[static_cast<std::size_t>(cell_index(spec, {4, 4}))];
    CHECK(std::abs(value_iteration(m, m.reward).value - 2.0 * std::pow(0.95, d)) <= 1e-8);
  }
}

TEST_CASE("gridworld with a hazard row routes around under a tight budget") {
  GridworldSpec spec;
  spec.width = 5;
  spec.height = 3;
  spec.start_cells = {{0, 0}};
  spec.goal_cells = {{0, 2}};
  spec.hazard_cells = {{0, 1}, {1, 1}, {2, 1}, {3, 1}};
  spec.gamma = 0.95;
  spec.kappa = 0.0;
  const Cmdp m = make_gridworld(spec);
  const ExactSolution sol = solve_cmdp_exact(m, 10.0);
  CHECK(sol.value_cost <= m.cost_limit + 1e-8);
  // Detour through column 4: 4 moves east, 2 south, 4 west.
  CHECK(sol.value_reward == doctest::Approx(std::pow(0.95, 10)).epsilon(1e-9));
}

TEST_CASE("gridworld spec validation") {
  GridworldSpec spec;
  spec.width = 3;
  spec.height = 3;
  spec.goal_cells = {{3, 0}};
  CHECK_THROWS_AS(make_gridworld(spec), ValidationError);

  spec.goal_cells = {{2, 2}};
  spec.slip_prob = 1.0;
  CHECK_THROWS_AS(make_gridworld(spec), ValidationError);

  spec.slip_prob = 0.0;
  spec.wall_cells = {{1, 2}, {2, 1}};
  CHECK_THROWS_AS(make_gridworld(spec), ValidationError);

  spec.wall_cells.clear();
  spec.goal_cells.clear();
  CHECK_THROWS_AS(make_gridworld(spec), ValidationError);
}

TEST_CASE("garnet: full branching supports every successor") {
  GarnetSpec spec;
  spec.num_states = 6;
  spec.num_actions = 3;
  spec.branching_factor = 6;
  spec.seed = 3;
  const Cmdp m = make_garnet(spec);
  for (const auto& P : m.transition) CHECK((P.array() > 0.0).all());
}

TEST_CASE("garnet: seed 7 rows are stochastic and branching is exact") {
  GarnetSpec spec;
  spec.num_states = 4;
  spec.num_actions = 2;
  spec.branching_factor = 2;
  spec.seed = 7;
  const Cmdp m = make_garnet(spec);
  for (const auto& P : m.transition) {
    for (Index s = 0; s < 4; ++s) {
      CHECK(std::abs(P.row(s).sum() - 1.0) <= 1e-12);
      CHECK((P.row(s).array() > 0.0).count() == 2);
    }
  }
  CHECK((m.reward.array() >= 0.0).all());
  CHECK((m.reward.array() <= 1.0).all());
  CHECK((m.cost.array() >= 0.0).all());
  CHECK((m.cost.array() <= 1.0).all());
}

TEST_CASE("garnet: generation is a pure function of the spec") {
  GarnetSpec spec;
  spec.num_states = 8;
  spec.num_actions = 3;
  spec.branching_factor = 3;
  spec.seed = 19;
  const std::string first = cmdp_to_json(make_garnet(spec)).dump();
  CHECK(cmdp_to_json(make_garnet(spec)).dump() == first);
  spec.seed = 20;
  CHECK(cmdp_to_json(make_garnet(spec)).dump() != first);
}

TEST_CASE("garnet: cost density extremes") {
  GarnetSpec spec;
  spec.num_states = 5;
  spec.num_actions = 2;
  spec.cost_density = 0.0;
  CHECK(make_garnet(spec).cost.isZero());
  spec.cost_density = 1.0;
  CHECK((make_garnet(spec).cost.array() > 0.0).all());
  spec.branching_factor = 6;
  CHECK_THROWS_AS(make_garnet(spec), ValidationError);
}
