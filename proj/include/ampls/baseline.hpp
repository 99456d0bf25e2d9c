// In-repo comparison planners over the analytic oracle: RRT-Connect and a
// straight-line feasibility check.
#pragma once

#include "ampls/scene.hpp"

namespace ampls {

struct RrtConfig {
  double step = 0.2;            // radians, per-extend cap
  double goal_bias = 0.1;       // probability of sampling the goal directly
  long max_iterations = 50000;
  double edge_spacing = 0.05;   // oracle check spacing along edges
  std::uint64_t seed = 0;
};

// Bidirectional RRT with the connect heuristic. Every returned edge is
// validated with the oracle (and self-collision) at edge_spacing.
// Deterministic per cfg.seed. Throws PlanningFailed at the iteration cap.
std::vector<JointConfig> rrt_connect(const ArmModel& arm, const Scene& scene,
                                     const JointConfig& q_start, const JointConfig& q_goal,
                                     const RrtConfig& cfg);

// Oracle check along interpolate_joints(q_start, q_goal, spacing).
bool straight_line_feasible(const ArmModel& arm, const Scene& scene,
                            const JointConfig& q_start, const JointConfig& q_goal,
                            double spacing);

}  // namespace ampls
