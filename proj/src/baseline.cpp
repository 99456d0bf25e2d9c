#include "ampls/baseline.hpp"

#include "ampls/planner.hpp"

namespace ampls {

namespace {

bool config_valid(const ArmModel& arm, const Scene& scene, const JointConfig& q) {
  return !self_collision(arm, q) && !oracle_collision(arm, q, scene).colliding;
}

// Validity of the open segment (qa, qb]; qa is assumed already validated.
bool edge_valid(const ArmModel& arm, const Scene& scene, const JointConfig& qa,
                const JointConfig& qb, double spacing) {
  const auto points = interpolate_joints(qa, qb, spacing);
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (!config_valid(arm, scene, points[i])) return false;
  }
  return true;
}

struct Tree {
  std::vector<JointConfig> nodes;
  std::vector<int> parent;

  int add(const JointConfig& q, int par) {
    nodes.push_back(q);
    parent.push_back(par);
    return static_cast<int>(nodes.size()) - 1;
  }
  int nearest(const JointConfig& q) const {
    int best = 0;
    double best_d = (nodes[0] - q).squaredNorm();
    for (std::size_t i = 1; i < nodes.size(); ++i) {
      const double d = (nodes[i] - q).squaredNorm();
      if (d < best_d) best_d = d, best = static_cast<int>(i);
    }
    return best;
  }
  std::vector<JointConfig> path_from_root(int idx) const {
    std::vector<JointConfig> out;
    for (int i = idx; i >= 0; i = parent[i]) out.push_back(nodes[i]);
    std::reverse(out.begin(), out.end());
    return out;
  }
};

enum class Extend { Trapped, Advanced, Reached };

}  // namespace

std::vector<JointConfig> rrt_connect(const ArmModel& arm, const Scene& scene,
                                     const JointConfig& q_start, const JointConfig& q_goal,
                                     const RrtConfig& cfg) {
  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const JointConfig lo = arm.lower_limits(), hi = arm.upper_limits();

  if ((q_start - q_goal).cwiseAbs().maxCoeff() < 1e-12) return {q_start};

  Tree trees[2];
  trees[0].add(q_start, -1);
  trees[1].add(q_goal, -1);
  int active = 0;  // tree being extended toward the sample

  auto sample = [&]() {
    if (unit(rng) < cfg.goal_bias) return active == 0 ? q_goal : q_start;
    JointConfig q(arm.dof());
    for (int i = 0; i < arm.dof(); ++i) q[i] = lo[i] + (hi[i] - lo[i]) * unit(rng);
    return q;
  };

  auto extend = [&](Tree& tree, const JointConfig& q_target, int& new_idx) {
    const int near = tree.nearest(q_target);
    const JointConfig& q_near = tree.nodes[near];
    JointConfig diff = q_target - q_near;
    const double dist = diff.norm();
    if (dist < 1e-12) {
      new_idx = near;
      return Extend::Reached;
    }
    const bool reaches = dist <= cfg.step;
    const JointConfig q_new = reaches ? q_target : JointConfig(q_near + diff * (cfg.step / dist));
    if (!edge_valid(arm, scene, q_near, q_new, cfg.edge_spacing)) {
      new_idx = -1;
      return Extend::Trapped;
    }
    new_idx = tree.add(q_new, near);
    return reaches ? Extend::Reached : Extend::Advanced;
  };

  for (long it = 0; it < cfg.max_iterations; ++it) {
    const JointConfig q_rand = sample();
    int a_idx = -1;
    if (extend(trees[active], q_rand, a_idx) != Extend::Trapped) {
      // Greedy connect of the other tree toward the new node.
      const JointConfig& q_new = trees[active].nodes[a_idx];
      const int other = 1 - active;
      int b_idx = -1;
      Extend status;
      do {
        status = extend(trees[other], q_new, b_idx);
      } while (status == Extend::Advanced);
      if (status == Extend::Reached) {
        auto path_a = trees[active].path_from_root(a_idx);
        auto path_b = trees[other].path_from_root(b_idx);
        if (active == 1) std::swap(path_a, path_b);  // path_a is now the start side
        // path_b ends at the meeting configuration too; append it reversed.
        path_a.insert(path_a.end(), path_b.rbegin() + 1, path_b.rend());
        return path_a;
      }
    }
    active = 1 - active;
  }
  throw PlanningFailed("rrt_connect: iteration cap reached");
}

bool straight_line_feasible(const ArmModel& arm, const Scene& scene,
                            const JointConfig& q_start, const JointConfig& q_goal,
                            double spacing) {
  for (const JointConfig& q : interpolate_joints(q_start, q_goal, spacing)) {
    if (oracle_collision(arm, q, scene).colliding) return false;
  }
  return true;
}

}  // namespace ampls
