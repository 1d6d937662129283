#pragma once

#include "o3srl/cmdp.hpp"

#include <cstdint>
#include <vector>

namespace o3srl {

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

/// Hazard gridworld. States are the width*height cells in row-major order
/// (index y*width + x) followed by one absorbing terminal state.
///
/// Actions are N, E, S, W. With probability slip_prob the move direction is
/// replaced by a uniformly random one; moves into walls or off the grid leave
/// the agent in place. Landing on a hazard cell costs 1. A goal cell pays 1 on
/// the step it is occupied and then moves to the terminal state, so a goal
/// reached after d moves is worth gamma^d.
struct GridworldSpec {
  int width = 1;
  int height = 1;
  std::vector<Cell> hazard_cells;
  std::vector<Cell> goal_cells;
  std::vector<Cell> wall_cells;
  /// Initial distribution is uniform over these; defaults to cell (0, 0).
  std::vector<Cell> start_cells;
  double slip_prob = 0.0;
  double gamma = 0.99;
  double kappa = 0.0;
  double goal_reward = 1.0;
};

enum class GridAction : int { north = 0, east = 1, south = 2, west = 3 };

Cmdp make_gridworld(const GridworldSpec& spec);

inline int cell_index(const GridworldSpec& spec, Cell c) { return c.y * spec.width + c.x; }

/// Random Garnet CMDP; reproducible from `seed`.
struct GarnetSpec {
  int num_states = 4;
  int num_actions = 2;
  int branching_factor = 2;
  double cost_density = 0.5;
  double reward_scale = 1.0;
  std::uint64_t seed = 0;
  double gamma = 0.99;
  double kappa = 0.0;
};

Cmdp make_garnet(const GarnetSpec& spec);

}  // namespace o3srl
