// Latent-space planner: activation-maximisation objective and gradient step,
// GECO coefficient adaptation, and explicit collision checking with joint
// interpolation, coefficient rescaling, and back-tracing. Open-loop and
// closed-loop drivers.
#pragma once

#include "ampls/colpred.hpp"

#include <functional>
#include <optional>

namespace ampls {

struct PlanTarget {
  Vec3 e_pos = Vec3::Zero();
  Rot6d e_ori = (Rot6d() << 1, 0, 0, 0, 1, 0).finished();

  static PlanTarget from_pose(const Pose& p) {
    return PlanTarget{p.position, rotmat_to_6d(p.rotation)};
  }
  Mat3 rotation() const { return sixd_to_rotmat(e_ori); }
};

struct PlannerConfig {
  double alpha_am = 0.05;          // latent step size
  int max_outer_iterations = 2000;
  double gamma_pos = 0.01;         // success tolerance, metres
  double gamma_ori_deg = 15.0;     // success tolerance, geodesic degrees
  double gamma_col = 0.4;          // collision probability gate
  int interp_min_steps = 10;
  double interp_spacing = 0.05;    // max joint-space spacing, radians

  GecoController geco_pos{1.0, 0.01, 0.0, false, 0.99, 1e-2, 1e-6, 1e4};
  GecoController geco_ori{1.0, 0.1, 0.0, false, 0.99, 1e-2, 1e-6, 1e4};
  GecoController geco_col{1.0, 0.105360516, 0.0, false, 0.99, 1e-2, 1e-6, 1e4};

  // Ablation switches (run_ablation_switches maps flags onto these).
  bool use_col_loss = true;
  bool use_prior_loss = true;
  bool use_explicit_check = true;
};

// Inclusive uniform interpolation; count = max(2, ceil(|qb-qa|_inf / spacing) + 1).
std::vector<JointConfig> interpolate_joints(const JointConfig& qa, const JointConfig& qb,
                                            double spacing);
std::vector<JointConfig> interpolate_joints_count(const JointConfig& qa,
                                                  const JointConfig& qb, int count);

template <typename S>
struct AmLossResult {
  S loss = S(0);
  VecX<S> grad_z;
  double pos_loss = 0, ori_loss = 0, col_loss = 0, prior_loss = 0;
  double pos_err = 0, ori_err = 0;  // unweighted L2 errors (metres / raw 6D)
  double p_col = 0;
};

// Full objective: lambda_pos*|e_pos - target|_2 + lambda_ori*|e_ori - target|_2
// + lambda_col*(-log(1 - p)) + 0.5*|z|^2, with p clamped to <= 1 - 1e-6.
// Throws NonFiniteLoss. Gradient is exact reverse-mode through the decoder,
// FK feature chain, and the classifier z head.
template <typename S>
AmLossResult<S> am_loss(const VecX<S>& z, const PlanTarget& target, const VoxelGrid& grid,
                        const VaeModel<S>& vae, const CollisionPredictor<S>& pred,
                        const ArmModel& arm, double lambda_pos, double lambda_ori,
                        double lambda_col, bool use_col_loss = true,
                        bool use_prior_loss = true);

// Same, reusing a collision forward already computed for the current z.
template <typename S>
AmLossResult<S> am_loss_from_forward(const CollisionForward<S>& fwd, const PlanTarget& target,
                                     const VaeModel<S>& vae, const CollisionPredictor<S>& pred,
                                     const ArmModel& arm, double lambda_pos, double lambda_ori,
                                     double lambda_col, bool use_col_loss, bool use_prior_loss);

struct AmState {
  VecX<float> z, z_prev;
  JointConfig q_prev;
  GecoController geco_pos, geco_ori, geco_col;
  std::vector<JointConfig> waypoints;      // buffer D, begins with q0
  std::vector<double> waypoint_probs;      // predictor probability at append time
  std::vector<double> waypoint_times;      // seconds since planning start
  long step = 0;
};

// One Eq. 3 iteration: loss/gradient at state.z, GECO updates of the three
// multipliers from the unweighted constraint values, then the gradient step.
AmLossResult<float> am_step(AmState& state, const PlanTarget& target, const VoxelGrid& grid,
                            const VaeModel<float>& vae, const CollisionPredictor<float>& pred,
                            const ArmModel& arm, const PlannerConfig& cfg,
                            const CollisionForward<float>& fwd);

struct StepDiagnostics {
  long step = 0;
  double loss = 0, pos_loss = 0, ori_loss = 0, col_loss = 0, prior_loss = 0;
  double lambda_pos = 0, lambda_ori = 0, lambda_col = 0;
  double p_col = 0;
  double pos_err = 0, ori_err = 0;
  // '.' optimise only, 'R' gate reject, 'A' accept, 'B' back-trace, 'S' success
  char event = '.';
};

struct PlanResult {
  std::vector<JointConfig> waypoints;
  std::vector<double> waypoint_probs;
  std::vector<double> waypoint_times;
  bool success = false;
  long iterations = 0;
  double planning_seconds = 0.0;
  std::vector<StepDiagnostics> diagnostics;
  std::string failure_reason;
};

// Algorithm-1 open-loop planner. The cloud is voxelised at the predictor's
// training grid spec. Success and termination test FK of the decoded joints
// against (gamma_pos, gamma_ori).
PlanResult plan_open_loop(const ArmModel& arm, const PointCloud& cloud,
                          const JointConfig& q0, const PlanTarget& target,
                          const PlannerConfig& cfg, const VaeModel<float>& vae,
                          const CollisionPredictor<float>& pred,
                          bool keep_diagnostics = false);

struct ClosedLoopConfig {
  PlannerConfig planner;
  int inner_steps_per_tick = 8;
  double tick_seconds = 0.1;
  int max_ticks = 300;
  double gamma_pos = 0.03;       // reach tolerance for the moving target
  double gamma_ori_deg = 20.0;
  bool stop_on_reach = true;
};

struct TickRecord {
  int tick = 0;
  JointConfig q_cmd;
  double p_col = 0;
  double pos_err = 0, ori_err_deg = 0;
  double compute_seconds = 0;
  bool overrun = false;   // soft deadline: compute exceeded the tick period
  bool reached = false;
};

struct ClosedLoopResult {
  std::vector<TickRecord> ticks;
  bool success = false;
  int reach_tick = -1;
  int overruns = 0;
};

// Per tick: refreshed point cloud and target, a fixed budget of inner
// iterations, then the latest accepted collision-free configuration is
// emitted. The stream returns nullopt to stop early.
using TickStream = std::function<std::optional<std::pair<PointCloud, PlanTarget>>(int tick)>;

ClosedLoopResult plan_closed_loop(const ArmModel& arm, const TickStream& stream,
                                  const JointConfig& q0, const ClosedLoopConfig& cfg,
                                  const VaeModel<float>& vae,
                                  const CollisionPredictor<float>& pred);

}  // namespace ampls
