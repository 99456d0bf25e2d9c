#include "ampls/planner.hpp"

#include <chrono>
#include <cmath>

namespace ampls {

namespace {
constexpr double kProbClamp = 1.0 - 1e-6;
constexpr double kNormGuard = 1e-12;
}  // namespace

std::vector<JointConfig> interpolate_joints_count(const JointConfig& qa,
                                                  const JointConfig& qb, int count) {
  count = std::max(2, count);
  std::vector<JointConfig> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) / (count - 1);
    out.push_back(qa + t * (qb - qa));
  }
  return out;
}

std::vector<JointConfig> interpolate_joints(const JointConfig& qa, const JointConfig& qb,
                                            double spacing) {
  if (qa.size() != qb.size()) throw DimensionMismatch("interpolate_joints: dims differ");
  const double span = (qb - qa).cwiseAbs().maxCoeff();
  const int count = std::max(2, static_cast<int>(std::ceil(span / spacing - 1e-12)) + 1);
  return interpolate_joints_count(qa, qb, count);
}

template <typename S>
AmLossResult<S> am_loss_from_forward(const CollisionForward<S>& fwd, const PlanTarget& target,
                                     const VaeModel<S>& vae, const CollisionPredictor<S>& pred,
                                     const ArmModel& arm, double lambda_pos, double lambda_ori,
                                     double lambda_col, bool use_col_loss, bool use_prior_loss) {
  const int dof = arm.dof();
  const Eigen::VectorXd x = vae.norm.denormalize(fwd.xhat.template cast<double>());
  const Vec3 e_pos = x.segment(dof, 3);
  const Eigen::Matrix<double, 6, 1> e_ori = x.tail(6);

  AmLossResult<S> out;
  out.pos_err = (e_pos - target.e_pos).norm();
  out.ori_err = (e_ori - target.e_ori).norm();
  out.p_col = static_cast<double>(fwd.p);
  const double p_clamped = std::min(out.p_col, kProbClamp);
  const double col_raw = -std::log1p(-p_clamped);

  out.pos_loss = lambda_pos * out.pos_err;
  out.ori_loss = lambda_ori * out.ori_err;
  out.col_loss = use_col_loss ? lambda_col * col_raw : 0.0;
  const double z2 = fwd.z.template cast<double>().squaredNorm();
  out.prior_loss = use_prior_loss ? 0.5 * z2 : 0.0;
  const double loss = out.pos_loss + out.ori_loss + out.col_loss + out.prior_loss;
  if (!std::isfinite(loss)) throw NonFiniteLoss("am_loss: non-finite loss");
  out.loss = static_cast<S>(loss);

  // Decoder-output cotangent from the two target terms.
  Eigen::VectorXd dx = Eigen::VectorXd::Zero(vae.norm.dim());
  dx.segment(dof, 3) = lambda_pos * (e_pos - target.e_pos) / std::max(out.pos_err, kNormGuard);
  dx.tail(6) = lambda_ori * (e_ori - target.e_ori) / std::max(out.ori_err, kNormGuard);
  VecX<S> dxhat = dx.cwiseProduct(vae.norm.scale).template cast<S>();

  VecX<S> dz_direct = VecX<S>::Zero(fwd.z.size());
  if (use_col_loss && lambda_col != 0.0) {
    const S d_p = static_cast<S>(lambda_col / (1.0 - p_clamped));
    const CollisionPullback<S> pb = collision_pullback(pred, fwd, vae, arm, d_p);
    dz_direct = pb.dz_direct;
    dxhat += pb.dxhat;
  }

  MlpGrads<S> dec_grads;
  mlp_backward(vae.decoder, fwd.dec_trace, MatX<S>(dxhat), dec_grads);
  out.grad_z = dz_direct + dec_grads.d_input.col(0);
  if (use_prior_loss) out.grad_z += fwd.z;
  if (!out.grad_z.allFinite()) throw NonFiniteLoss("am_loss: non-finite gradient");
  return out;
}

template <typename S>
AmLossResult<S> am_loss(const VecX<S>& z, const PlanTarget& target, const VoxelGrid& grid,
                        const VaeModel<S>& vae, const CollisionPredictor<S>& pred,
                        const ArmModel& arm, double lambda_pos, double lambda_ori,
                        double lambda_col, bool use_col_loss, bool use_prior_loss) {
  const CollisionForward<S> fwd = collision_forward(pred, z, grid, vae, arm);
  return am_loss_from_forward(fwd, target, vae, pred, arm, lambda_pos, lambda_ori,
                              lambda_col, use_col_loss, use_prior_loss);
}

AmLossResult<float> am_step(AmState& state, const PlanTarget& target, const VoxelGrid& grid,
                            const VaeModel<float>& vae, const CollisionPredictor<float>& pred,
                            const ArmModel& arm, const PlannerConfig& cfg,
                            const CollisionForward<float>& fwd) {
  (void)grid;
  AmLossResult<float> r = am_loss_from_forward(
      fwd, target, vae, pred, arm, state.geco_pos.lambda, state.geco_ori.lambda,
      state.geco_col.lambda, cfg.use_col_loss, cfg.use_prior_loss);

  // GECO sees the unweighted constraint values; targets live in the controllers.
  state.geco_pos = geco_update(state.geco_pos, r.pos_err);
  state.geco_ori = geco_update(state.geco_ori, r.ori_err);
  const double col_raw = -std::log1p(-std::min(r.p_col, kProbClamp));
  state.geco_col = geco_update(state.geco_col, col_raw);

  state.z -= static_cast<float>(cfg.alpha_am) * r.grad_z;
  ++state.step;
  return r;
}

namespace {

struct TargetCheck {
  Mat3 rotation;
  double gamma_pos;
  double gamma_ori_rad;

  bool reached(const Pose& ee, const PlanTarget& t, double* pos_err = nullptr,
               double* ori_err = nullptr) const {
    const double pe = (ee.position - t.e_pos).norm();
    const double oe = geodesic_angle(ee.rotation, rotation);
    if (pos_err) *pos_err = pe;
    if (ori_err) *ori_err = oe;
    return pe < gamma_pos && oe < gamma_ori_rad;
  }
};

// Scale a controller's multiplier in place (explicit-check rescale event).
void rescale_lambda(GecoController& c, double factor) {
  c.lambda = std::clamp(c.lambda * factor, c.lambda_min, c.lambda_max);
}

}  // namespace

PlanResult plan_open_loop(const ArmModel& arm, const PointCloud& cloud,
                          const JointConfig& q0, const PlanTarget& target,
                          const PlannerConfig& cfg, const VaeModel<float>& vae,
                          const CollisionPredictor<float>& pred, bool keep_diagnostics) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };

  const VoxelGrid grid = voxelize(cloud, pred.grid_spec);
  const TargetCheck check{target.rotation(), cfg.gamma_pos,
                          cfg.gamma_ori_deg * M_PI / 180.0};

  PlanResult result;
  AmState state;
  state.q_prev = q0;
  state.geco_pos = cfg.geco_pos;
  state.geco_ori = cfg.geco_ori;
  state.geco_col = cfg.geco_col;
  state.waypoints.push_back(q0);
  state.waypoint_probs.push_back(
      static_cast<double>(predict_for_configs(pred, vae, arm, grid, {q0})[0]));
  state.waypoint_times.push_back(elapsed());

  auto finish = [&](bool success, const std::string& reason, long iterations) {
    result.waypoints = std::move(state.waypoints);
    result.waypoint_probs = std::move(state.waypoint_probs);
    result.waypoint_times = std::move(state.waypoint_times);
    result.success = success;
    result.failure_reason = success ? "" : reason;
    result.iterations = iterations;
    result.planning_seconds = elapsed();
    return result;
  };

  if (check.reached(forward_kinematics(arm, q0).ee, target)) {
    return finish(true, "", 0);
  }

  state.z = encode_config_mean(vae, arm, q0);
  state.z_prev = state.z;

  for (long t = 0; t < cfg.max_outer_iterations; ++t) {
    CollisionForward<float> fwd = collision_forward(pred, state.z, grid, vae, arm);
    JointConfig q_hat =
        vae.norm.denormalize(fwd.xhat.cast<double>()).head(arm.dof());

    char event = '.';
    bool done = false;
    if (cfg.use_explicit_check) {
      if (t > 0 && fwd.p < cfg.gamma_col) {
        const auto by_spacing = interpolate_joints(state.q_prev, q_hat, cfg.interp_spacing);
        const int m = std::max<int>(cfg.interp_min_steps, static_cast<int>(by_spacing.size()));
        const auto interp = interpolate_joints_count(state.q_prev, q_hat, m);
        // q_prev (index 0) was accepted when appended; check indices 1..m-1.
        std::vector<JointConfig> to_check(interp.begin() + 1, interp.end());
        const VecX<float> probs = predict_for_configs(pred, vae, arm, grid, to_check);
        int first_collision = -1;
        for (int i = 0; i < probs.size(); ++i) {
          if (probs[i] >= cfg.gamma_col) {
            first_collision = i + 1;  // index in the full interpolated list
            break;
          }
        }
        if (first_collision >= 0) {
          const double factor = static_cast<double>(first_collision) / m;
          rescale_lambda(state.geco_pos, factor);
          rescale_lambda(state.geco_ori, factor);
          state.z = state.z_prev;  // back-trace; q_hat follows from z next decode
          fwd = collision_forward(pred, state.z, grid, vae, arm);
          q_hat = vae.norm.denormalize(fwd.xhat.cast<double>()).head(arm.dof());
          event = 'B';
        } else {
          const double now = elapsed();
          for (int i = 1; i < m; ++i) {
            state.waypoints.push_back(interp[i]);
            state.waypoint_probs.push_back(probs[i - 1]);
            state.waypoint_times.push_back(now);
          }
          event = 'A';
          if (check.reached(forward_kinematics(arm, q_hat).ee, target)) {
            event = 'S';
            done = true;
          } else {
            state.q_prev = q_hat;
            state.z_prev = state.z;
          }
        }
      } else if (t > 0) {
        event = 'R';  // gate rejected the decoded configuration
      }
    } else {
      // Ablation: pure gradient descent with per-step append.
      state.waypoints.push_back(q_hat);
      state.waypoint_probs.push_back(static_cast<double>(fwd.p));
      state.waypoint_times.push_back(elapsed());
      state.q_prev = q_hat;
      if (check.reached(forward_kinematics(arm, q_hat).ee, target)) {
        event = 'S';
        done = true;
      }
    }

    if (done) {
      if (keep_diagnostics) {
        StepDiagnostics d;
        d.step = t;
        d.p_col = fwd.p;
        d.lambda_pos = state.geco_pos.lambda;
        d.lambda_ori = state.geco_ori.lambda;
        d.lambda_col = state.geco_col.lambda;
        d.event = event;
        result.diagnostics.push_back(d);
      }
      return finish(true, "", t + 1);
    }

    const AmLossResult<float> r = am_step(state, target, grid, vae, pred, arm, cfg, fwd);
    if (keep_diagnostics) {
      StepDiagnostics d;
      d.step = t;
      d.loss = r.loss;
      d.pos_loss = r.pos_loss;
      d.ori_loss = r.ori_loss;
      d.col_loss = r.col_loss;
      d.prior_loss = r.prior_loss;
      d.lambda_pos = state.geco_pos.lambda;
      d.lambda_ori = state.geco_ori.lambda;
      d.lambda_col = state.geco_col.lambda;
      d.p_col = r.p_col;
      d.pos_err = r.pos_err;
      d.ori_err = r.ori_err;
      d.event = event;
      result.diagnostics.push_back(d);
    }
  }
  return finish(false, "max iterations", cfg.max_outer_iterations);
}

ClosedLoopResult plan_closed_loop(const ArmModel& arm, const TickStream& stream,
                                  const JointConfig& q0, const ClosedLoopConfig& cfg,
                                  const VaeModel<float>& vae,
                                  const CollisionPredictor<float>& pred) {
  using clock = std::chrono::steady_clock;
  const PlannerConfig& pc = cfg.planner;
  const double gamma_ori_rad = cfg.gamma_ori_deg * M_PI / 180.0;

  ClosedLoopResult result;
  AmState state;
  state.q_prev = q0;
  state.geco_pos = pc.geco_pos;
  state.geco_ori = pc.geco_ori;
  state.geco_col = pc.geco_col;
  state.z = encode_config_mean(vae, arm, q0);
  state.z_prev = state.z;
  long global_step = 0;

  for (int tick = 0; tick < cfg.max_ticks; ++tick) {
    const auto input = stream(tick);
    if (!input) break;
    const auto tick_start = clock::now();
    const VoxelGrid grid = voxelize(input->first, pred.grid_spec);
    const PlanTarget& target = input->second;
    const TargetCheck check{target.rotation(), cfg.gamma_pos, gamma_ori_rad};

    double last_p = 0.0;
    for (int k = 0; k < cfg.inner_steps_per_tick; ++k) {
      CollisionForward<float> fwd = collision_forward(pred, state.z, grid, vae, arm);
      JointConfig q_hat = vae.norm.denormalize(fwd.xhat.cast<double>()).head(arm.dof());
      last_p = fwd.p;

      if (pc.use_explicit_check && global_step > 0 && fwd.p < pc.gamma_col) {
        const auto by_spacing = interpolate_joints(state.q_prev, q_hat, pc.interp_spacing);
        const int m = std::max<int>(pc.interp_min_steps, static_cast<int>(by_spacing.size()));
        const auto interp = interpolate_joints_count(state.q_prev, q_hat, m);
        std::vector<JointConfig> to_check(interp.begin() + 1, interp.end());
        const VecX<float> probs = predict_for_configs(pred, vae, arm, grid, to_check);
        int first_collision = -1;
        for (int i = 0; i < probs.size(); ++i) {
          if (probs[i] >= pc.gamma_col) {
            first_collision = i + 1;
            break;
          }
        }
        if (first_collision >= 0) {
          rescale_lambda(state.geco_pos, static_cast<double>(first_collision) / m);
          rescale_lambda(state.geco_ori, static_cast<double>(first_collision) / m);
          state.z = state.z_prev;
          fwd = collision_forward(pred, state.z, grid, vae, arm);
        } else {
          state.q_prev = q_hat;
          state.z_prev = state.z;
        }
      } else if (!pc.use_explicit_check) {
        state.q_prev = q_hat;
      }
      am_step(state, target, grid, vae, pred, arm, pc, fwd);
      ++global_step;
    }

    TickRecord rec;
    rec.tick = tick;
    rec.q_cmd = state.q_prev;
    rec.p_col = last_p;
    rec.compute_seconds = std::chrono::duration<double>(clock::now() - tick_start).count();
    rec.overrun = rec.compute_seconds > cfg.tick_seconds;
    if (rec.overrun) ++result.overruns;
    const Pose ee = forward_kinematics(arm, rec.q_cmd).ee;
    rec.pos_err = (ee.position - target.e_pos).norm();
    rec.ori_err_deg = geodesic_angle(ee.rotation, check.rotation) * 180.0 / M_PI;
    rec.reached = check.reached(ee, target);
    result.ticks.push_back(rec);

    if (rec.reached && !result.success) {
      result.success = true;
      result.reach_tick = tick;
      if (cfg.stop_on_reach) break;
    }
  }
  return result;
}

// Explicit instantiations for the loss (float drives planning, double drives
// the finite-difference acceptance checks).
template AmLossResult<float> am_loss(const VecX<float>&, const PlanTarget&, const VoxelGrid&,
                                     const VaeModel<float>&, const CollisionPredictor<float>&,
                                     const ArmModel&, double, double, double, bool, bool);
template AmLossResult<double> am_loss(const VecX<double>&, const PlanTarget&, const VoxelGrid&,
                                      const VaeModel<double>&, const CollisionPredictor<double>&,
                                      const ArmModel&, double, double, double, bool, bool);
template AmLossResult<float> am_loss_from_forward(const CollisionForward<float>&,
                                                  const PlanTarget&, const VaeModel<float>&,
                                                  const CollisionPredictor<float>&,
                                                  const ArmModel&, double, double, double,
                                                  bool, bool);
template AmLossResult<double> am_loss_from_forward(const CollisionForward<double>&,
                                                   const PlanTarget&, const VaeModel<double>&,
                                                   const CollisionPredictor<double>&,
                                                   const ArmModel&, double, double, double,
                                                   bool, bool);

}  // namespace ampls
