// Configurable serial arm: forward kinematics, feasibility sampling,
// capsule self-collision, and damped-least-squares IK.
#pragma once

#include "ampls/geometry.hpp"

#include <utility>
#include <vector>

namespace ampls {

using JointConfig = Eigen::VectorXd;

struct LinkSpec {
  Pose offset;                 // parent frame -> joint frame, before rotation
  Vec3 axis = Vec3::UnitZ();   // unit vector in the joint frame
  double lo = -3.14, hi = 3.14;
};

// Capsule attached to a link frame; link == -1 means the fixed base frame.
struct ArmCapsule {
  int link = -1;
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  double radius = 0.05;
};

struct ArmModel {
  std::string name;
  std::vector<LinkSpec> links;
  Pose ee_offset;                                   // last joint frame -> end-effector
  std::vector<ArmCapsule> capsules;                 // flat list, self/world collision geometry
  std::vector<std::pair<int, int>> self_collision_pairs;  // indices into capsules

  int dof() const { return static_cast<int>(links.size()); }
  JointConfig lower_limits() const;
  JointConfig upper_limits() const;
};

// Franka-Panda-like 7-DoF fixture used throughout; also shipped as
// configs/arm_7dof.json (see load_arm / save_arm).
ArmModel default_arm_7dof();

ArmModel load_arm(const std::string& path);
void save_arm(const ArmModel& arm, const std::string& path);
std::string arm_to_json(const ArmModel& arm);
ArmModel arm_from_json(const std::string& json_text);

struct FkResult {
  Pose ee;
  std::vector<Pose> link_frames;  // one per jointed link, after its rotation
};

FkResult forward_kinematics(const ArmModel& arm, const JointConfig& q);

// FK plus the world joint axes/origins needed for analytic derivatives.
// For a point p attached to link l: dp/dq_j = axis_j x (p - origin_j), j <= l.
// For link rotation R_l: dR_l/dq_j = skew(axis_j) * R_l, j <= l.
struct FkDerivatives {
  FkResult fk;
  std::vector<Vec3> joint_axes_world;
  std::vector<Vec3> joint_origins_world;
};

FkDerivatives forward_kinematics_derivatives(const ArmModel& arm, const JointConfig& q);

// Capsule endpoints in world coordinates for a given configuration.
// table_check is false for base capsules (part of the mount).
struct WorldCapsule {
  Vec3 a, b;
  double radius;
  bool table_check = true;
};
std::vector<WorldCapsule> world_capsules(const ArmModel& arm, const FkResult& fk);

bool self_collision(const ArmModel& arm, const JointConfig& q);

// Uniform over the joint-limit box, rejecting self-colliding draws.
// Throws SamplingExhausted after 10000 rejections.
JointConfig sample_feasible_config(const ArmModel& arm, Rng& rng);

struct IkOptions {
  double damping = 1e-2;
  double step_cap = 0.2;        // per-iteration infinity-norm cap, radians
  int max_iterations = 200;
  int max_restarts = 50;
  double pos_tol = 0.01;        // metres
  double ori_tol_rad = 15.0 * M_PI / 180.0;
};

// Damped-least-squares IK on the 6-dim pose error. Restarts from random
// feasible seeds; throws IkFailed when the restart budget is exhausted.
JointConfig inverse_kinematics(const ArmModel& arm, const Pose& target,
                               const JointConfig& q_seed, const IkOptions& opts,
                               Rng& rng);

struct RobotState {
  JointConfig q;
  Vec3 e_pos;
  Rot6d e_ori;

  // Layout: q (dof), e_pos (3), e_ori (6).
  Eigen::VectorXd flatten() const;
};

RobotState robot_state(const ArmModel& arm, const JointConfig& q);

}  // namespace ampls
