#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "eigenopt/gridworld.hpp"
#include "eigenopt/rng.hpp"
#include "support.hpp"

namespace eigenopt {
namespace {

using testing::corridor;
using testing::open_room;

Action opposite(Action a) {
  switch (a) {
    case Action::Up: return Action::Down;
    case Action::Down: return Action::Up;
    case Action::Left: return Action::Right;
    case Action::Right: return Action::Left;
  }
  return a;
}

TEST(Gridworld, FourRoomsGeometry) {
  const GridLayout g = four_rooms_layout();
  EXPECT_EQ(g.height(), 13);
  EXPECT_EQ(g.width(), 13);
  EXPECT_EQ(g.num_states(), 104);
  std::set<std::pair<int, int>> doors;
  for (State d : g.doorways()) doors.insert({g.cell_of(d).row, g.cell_of(d).col});
  EXPECT_EQ(doors, (std::set<std::pair<int, int>>{{3, 6}, {10, 6}, {6, 2}, {7, 9}}));
}

TEST(Gridworld, NineRoomsGeometry) {
  const GridLayout g = nine_rooms_layout();
  EXPECT_EQ(g.height(), 19);
  EXPECT_EQ(g.width(), 19);
  EXPECT_EQ(g.doorways().size(), 12u);
  EXPECT_EQ(g.num_states(), 9 * 25 + 12);
}

TEST(Gridworld, DoorwaysMatchDetourOracle) {
  for (const char* name : {"four_rooms", "nine_rooms"}) {
    const GridLayout g = build_layout(name);
    EXPECT_EQ(g.doorways(), testing::doorway_oracle(g)) << name;
  }
}

TEST(Gridworld, OpenRoomAndCorridorHaveNoDoorways) {
  EXPECT_TRUE(open_room(5).doorways().empty());
  EXPECT_TRUE(corridor(5).doorways().empty());
}

TEST(Gridworld, UnknownEnvironmentIsConfigError) {
  EXPECT_THROW(build_layout("five_rooms"), ConfigError);
  EXPECT_THROW(default_start_goals("five_rooms"), ConfigError);
}

TEST(Gridworld, RejectsBadMaps) {
  EXPECT_THROW(GridLayout::from_rows("x", {"###", "#..", "###"}), ValidationError);      // open border
  EXPECT_THROW(GridLayout::from_rows("x", {"#####", "#.#.#", "#####"}), ValidationError);  // disconnected
  EXPECT_THROW(GridLayout::from_rows("x", {"####", "#.#", "###"}), ValidationError);     // ragged
  EXPECT_THROW(GridLayout::from_rows("x", {"###", "###", "###"}), ValidationError);      // no floor
  EXPECT_THROW(layout_from_text("x", "###\n#x#\n###\n"), ValidationError);
  EXPECT_THROW(layout_from_text("x", "####\n#SS#\n####\n"), ValidationError);
}

TEST(Gridworld, StepIntoWallStaysPut) {
  const GridLayout g = four_rooms_layout();
  const State corner = g.state_of({1, 1});
  const Transition t = step(g, GoalFree{}, corner, Action::Up);
  EXPECT_EQ(t.next_state, corner);
  EXPECT_EQ(t.reward, 0.0);
  EXPECT_FALSE(t.done);
}

TEST(Gridworld, StepOntoGoalRewardsAndEnds) {
  const GridLayout g = four_rooms_layout();
  const TaskMode mode{g.state_of({11, 10}), g.state_of({11, 11})};
  const Transition t = step(g, mode, mode.start, Action::Right);
  EXPECT_EQ(t.next_state, mode.goal);
  EXPECT_EQ(t.reward, 1.0);
  EXPECT_TRUE(t.done);
  const Transition miss = step(g, mode, mode.start, Action::Up);
  EXPECT_EQ(miss.reward, 0.0);
  EXPECT_FALSE(miss.done);
}

TEST(Gridworld, GoalFreeModeNeverEnds) {
  const GridLayout g = four_rooms_layout();
  for (State s = 0; s < g.num_states(); ++s)
    for (Action a : kActions) {
      const Transition t = step(g, GoalFree{}, s, a);
      EXPECT_FALSE(t.done);
      EXPECT_EQ(t.reward, 0.0);
    }
}

TEST(Gridworld, PropertyMovesAreReversible) {
  for (const char* name : {"four_rooms", "nine_rooms"}) {
    const GridLayout g = build_layout(name);
    for (State s = 0; s < g.num_states(); ++s)
      for (Action a : kActions) {
        const State t = g.move(s, a);
        if (t != s) EXPECT_EQ(g.move(t, opposite(a)), s) << name << " state " << s;
      }
  }
}

TEST(Gridworld, PropertyStateIndexIsBijection) {
  const GridLayout g = nine_rooms_layout();
  std::set<std::pair<int, int>> cells;
  for (State s = 0; s < g.num_states(); ++s) {
    const Cell c = g.cell_of(s);
    EXPECT_FALSE(g.is_wall(c));
    EXPECT_EQ(g.state_of(c), s);
    cells.insert({c.row, c.col});
  }
  EXPECT_EQ(static_cast<int>(cells.size()), g.num_states());
  int floor = 0;
  for (int r = 0; r < g.height(); ++r)
    for (int c = 0; c < g.width(); ++c) floor += g.is_wall({r, c}) ? 0 : 1;
  EXPECT_EQ(floor, g.num_states());
  EXPECT_THROW(g.state_of({0, 0}), ValidationError);
}

TEST(Gridworld, PropertyAllStatesConnected) {
  for (const char* name : {"four_rooms", "nine_rooms"}) {
    const GridLayout g = build_layout(name);
    const auto d = bfs_distances(g, 0);
    EXPECT_TRUE(std::all_of(d.begin(), d.end(), [](int x) { return x >= 0; })) << name;
  }
}

TEST(Gridworld, UniformTransitionRows) {
  const GridLayout g = four_rooms_layout();
  const Eigen::MatrixXd p = transition_matrix(g, uniform_policy(g));
  const State interior = g.state_of({2, 2});
  EXPECT_DOUBLE_EQ(p(interior, interior), 0.0);
  EXPECT_EQ((p.row(interior).array() == 0.25).count(), 4);
  const State corner = g.state_of({1, 1});
  EXPECT_DOUBLE_EQ(p(corner, corner), 0.5);
  EXPECT_DOUBLE_EQ(p(corner, g.state_of({1, 2})), 0.25);
  EXPECT_DOUBLE_EQ(p(corner, g.state_of({2, 1})), 0.25);
}

TEST(Gridworld, DeterministicPolicyRowsAreOneHot) {
  const GridLayout g = four_rooms_layout();
  StochasticPolicy right(static_cast<std::size_t>(g.num_states()), {0, 0, 0, 1});
  const Eigen::MatrixXd p = transition_matrix(g, right);
  for (State s = 0; s < g.num_states(); ++s) EXPECT_EQ(p(s, g.move(s, Action::Right)), 1.0);
}

TEST(Gridworld, NonStochasticPolicyRejected) {
  const GridLayout g = four_rooms_layout();
  StochasticPolicy bad = uniform_policy(g);
  bad[3] = {0.5, 0.5, 0.5, 0.0};
  EXPECT_THROW(transition_matrix(g, bad), ValidationError);
  bad[3] = {1.5, -0.5, 0.0, 0.0};
  EXPECT_THROW(transition_matrix(g, bad), ValidationError);
  EXPECT_THROW(transition_matrix(g, StochasticPolicy(3, {1, 0, 0, 0})), ValidationError);
}

TEST(Gridworld, PropertyTransitionMatrixRowStochastic) {
  const GridLayout g = nine_rooms_layout();
  Rng rng(7);
  StochasticPolicy pi(static_cast<std::size_t>(g.num_states()));
  for (auto& row : pi) {
    double total = 0.0;
    for (double& w : row) total += (w = rng.uniform());
    for (double& w : row) w /= total;
  }
  const Eigen::MatrixXd p = transition_matrix(g, pi);
  EXPECT_GE(p.minCoeff(), 0.0);
  for (Eigen::Index s = 0; s < p.rows(); ++s) EXPECT_NEAR(p.row(s).sum(), 1.0, 1e-12);
}

TEST(Gridworld, DefaultStartGoalsAreFloorCellsInDifferentRooms) {
  for (const char* name : {"four_rooms", "nine_rooms"}) {
    const GridLayout g = build_layout(name);
    const auto configs = default_start_goals(name);
    ASSERT_EQ(configs.size(), 4u);
    for (const StartGoal& sg : configs) {
      const TaskMode m = task_mode(g, sg);
      EXPECT_NE(m.start, m.goal);
      EXPECT_GT(bfs_distances(g, m.start)[m.goal], 8) << name << " " << sg.id;
    }
  }
}

TEST(Gridworld, LayoutTextRoundTrip) {
  const GridLayout g = nine_rooms_layout();
  const std::string text = layout_to_text(g, g.state_of({1, 1}), g.state_of({17, 17}));
  const ParsedLayout parsed = layout_from_text("nine_rooms", text);
  EXPECT_EQ(parsed.layout.num_states(), g.num_states());
  EXPECT_EQ(parsed.layout.doorways(), g.doorways());
  EXPECT_EQ(parsed.start, g.state_of({1, 1}));
  EXPECT_EQ(parsed.goal, g.state_of({17, 17}));
  EXPECT_EQ(layout_to_text(parsed.layout, parsed.start, parsed.goal), text);
}

TEST(Gridworld, BfsMatchesFloydWarshall) {
  const GridLayout g = four_rooms_layout();
  const auto all = testing::floyd_warshall(g);
  for (State s = 0; s < g.num_states(); s += 7) {
    const auto d = bfs_distances(g, s);
    for (State t = 0; t < g.num_states(); ++t) EXPECT_EQ(d[t], all[s][t]);
  }
}

}  // namespace
}  // namespace eigenopt
