#include "ampls/kinematics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace ampls {

using nlohmann::json;

JointConfig ArmModel::lower_limits() const {
  JointConfig lo(dof());
  for (int i = 0; i < dof(); ++i) lo[i] = links[i].lo;
  return lo;
}

JointConfig ArmModel::upper_limits() const {
  JointConfig hi(dof());
  for (int i = 0; i < dof(); ++i) hi[i] = links[i].hi;
  return hi;
}

FkResult forward_kinematics(const ArmModel& arm, const JointConfig& q) {
  if (q.size() != arm.dof())
    throw DimensionMismatch("forward_kinematics: |q| != joint count");
  FkResult out;
  out.link_frames.reserve(arm.links.size());
  Pose frame;  // base = identity
  for (int i = 0; i < arm.dof(); ++i) {
    const LinkSpec& link = arm.links[i];
    frame = frame * link.offset;
    frame.rotation = frame.rotation * axis_angle(link.axis, q[i]);
    out.link_frames.push_back(frame);
  }
  out.ee = frame * arm.ee_offset;
  return out;
}

FkDerivatives forward_kinematics_derivatives(const ArmModel& arm, const JointConfig& q) {
  if (q.size() != arm.dof())
    throw DimensionMismatch("forward_kinematics_derivatives: |q| != joint count");
  FkDerivatives out;
  out.fk.link_frames.reserve(arm.links.size());
  out.joint_axes_world.reserve(arm.links.size());
  out.joint_origins_world.reserve(arm.links.size());
  Pose frame;
  for (int i = 0; i < arm.dof(); ++i) {
    const LinkSpec& link = arm.links[i];
    frame = frame * link.offset;
    out.joint_origins_world.push_back(frame.position);
    out.joint_axes_world.push_back(frame.rotation * link.axis);
    frame.rotation = frame.rotation * axis_angle(link.axis, q[i]);
    out.fk.link_frames.push_back(frame);
  }
  out.fk.ee = frame * arm.ee_offset;
  return out;
}

std::vector<WorldCapsule> world_capsules(const ArmModel& arm, const FkResult& fk) {
  std::vector<WorldCapsule> out;
  out.reserve(arm.capsules.size());
  for (const ArmCapsule& c : arm.capsules) {
    if (c.link < 0) {
      out.push_back({c.a, c.b, c.radius, false});
    } else {
      const Pose& f = fk.link_frames[c.link];
      out.push_back({f * c.a, f * c.b, c.radius, true});
    }
  }
  return out;
}

bool self_collision(const ArmModel& arm, const JointConfig& q) {
  if (arm.self_collision_pairs.empty()) return false;
  const auto caps = world_capsules(arm, forward_kinematics(arm, q));
  for (const auto& [i, j] : arm.self_collision_pairs) {
    const double d = segment_segment_distance(caps[i].a, caps[i].b, caps[j].a, caps[j].b);
    if (d < caps[i].radius + caps[j].radius) return true;
  }
  return false;
}

JointConfig sample_feasible_config(const ArmModel& arm, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  JointConfig q(arm.dof());
  for (int attempt = 0; attempt < 10000; ++attempt) {
    for (int i = 0; i < arm.dof(); ++i) {
      const LinkSpec& l = arm.links[i];
      q[i] = l.lo + (l.hi - l.lo) * unit(rng);
    }
    if (!self_collision(arm, q)) return q;
  }
  throw SamplingExhausted("sample_feasible_config: 10000 consecutive self-colliding draws");
}

namespace {

// Rotation-vector (axis * angle) of R, for the IK pose error.
Vec3 rotation_log(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double angle = std::acos(c);
  if (angle < 1e-10) return Vec3::Zero();
  Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double s = axis.norm();
  if (s < 1e-10) {
    // angle ~ pi: extract axis from the diagonal
    Vec3 sq = ((r.diagonal().array() + 1.0) * 0.5).cwiseMax(0.0).sqrt();
    int k = 0;
    sq.maxCoeff(&k);
    Vec3 a = Vec3::Zero();
    a[k] = sq[k];
    if (sq[k] > 1e-12) {
      for (int i = 0; i < 3; ++i)
        if (i != k) a[i] = (r(k, i) + r(i, k)) / (4.0 * sq[k]);
    }
    return a.normalized() * angle;
  }
  return axis / s * angle;
}

}  // namespace

JointConfig inverse_kinematics(const ArmModel& arm, const Pose& target,
                               const JointConfig& q_seed, const IkOptions& opts,
                               Rng& rng) {
  const int n = arm.dof();
  const JointConfig lo = arm.lower_limits(), hi = arm.upper_limits();
  JointConfig q = q_seed;
  for (int restart = 0; restart <= opts.max_restarts; ++restart) {
    if (restart > 0) q = sample_feasible_config(arm, rng);
    for (int it = 0; it < opts.max_iterations; ++it) {
      const FkDerivatives fkd = forward_kinematics_derivatives(arm, q);
      const Pose& ee = fkd.fk.ee;
      const Vec3 pos_err = target.position - ee.position;
      const Vec3 ori_err = rotation_log(target.rotation * ee.rotation.transpose());
      if (pos_err.norm() < opts.pos_tol &&
          geodesic_angle(target.rotation, ee.rotation) < opts.ori_tol_rad &&
          !self_collision(arm, q))
        return q;

      Eigen::Matrix<double, 6, Eigen::Dynamic> jac(6, n);
      for (int j = 0; j < n; ++j) {
        const Vec3& w = fkd.joint_axes_world[j];
        jac.col(j).head<3>() = w.cross(ee.position - fkd.joint_origins_world[j]);
        jac.col(j).tail<3>() = w;
      }
      Eigen::Matrix<double, 6, 1> err;
      err << pos_err, ori_err;
      const Eigen::Matrix<double, 6, 6> gram =
          jac * jac.transpose() +
          opts.damping * opts.damping * Eigen::Matrix<double, 6, 6>::Identity();
      JointConfig dq = jac.transpose() * gram.ldlt().solve(err);
      const double m = dq.cwiseAbs().maxCoeff();
      if (m > opts.step_cap) dq *= opts.step_cap / m;
      q = (q + dq).cwiseMax(lo).cwiseMin(hi);
    }
  }
  throw IkFailed("inverse_kinematics: restart budget exhausted");
}

Eigen::VectorXd RobotState::flatten() const {
  Eigen::VectorXd x(q.size() + 9);
  x << q, e_pos, e_ori;
  return x;
}

RobotState robot_state(const ArmModel& arm, const JointConfig& q) {
  const FkResult fk = forward_kinematics(arm, q);
  return RobotState{q, fk.ee.position, rotmat_to_6d(fk.ee.rotation)};
}

// ---------------------------------------------------------------------------
// Default 7-DoF fixture (Panda-like geometry, capsule collision model)
// ---------------------------------------------------------------------------

namespace {

LinkSpec make_link(double alpha, double a, double d, double lo, double hi) {
  // Joint offset in axis/offset form derived from modified DH:
  //   offset = Rx(alpha) about x, translation [a, -d sin(alpha), d cos(alpha)]
  LinkSpec l;
  l.offset.rotation = axis_angle(Vec3::UnitX(), alpha);
  l.offset.position = Vec3(a, -d * std::sin(alpha), d * std::cos(alpha));
  l.axis = Vec3::UnitZ();
  l.lo = lo;
  l.hi = hi;
  return l;
}

}  // namespace

ArmModel default_arm_7dof() {
  constexpr double half_pi = M_PI / 2.0;
  ArmModel arm;
  arm.name = "arm_7dof";
  arm.links = {
      make_link(0.0, 0.0, 0.333, -2.8973, 2.8973),
      make_link(-half_pi, 0.0, 0.0, -1.7628, 1.7628),
      make_link(half_pi, 0.0, 0.316, -2.8973, 2.8973),
      make_link(half_pi, 0.0825, 0.0, -3.0718, -0.0698),
      make_link(-half_pi, -0.0825, 0.384, -2.8973, 2.8973),
      make_link(half_pi, 0.0, 0.0, -0.0175, 3.7525),
      make_link(half_pi, 0.088, 0.0, -2.8973, 2.8973),
  };
  arm.ee_offset = Pose(Vec3(0, 0, 0.107), Mat3::Identity());

  // 0: base column (fixed mount, exempt from the table check by link == -1)
  // 1: shoulder, 2: upper arm, 3: elbow, 4: forearm, 5: wrist, 6: wrist link, 7: hand
  arm.capsules = {
      {-1, Vec3(0, 0, 0.08), Vec3(0, 0, 0.26), 0.09},
      {0, Vec3(0, 0, -0.08), Vec3(0, 0, 0.06), 0.085},
      {1, Vec3(0, -0.03, 0), Vec3(0, -0.29, 0), 0.075},
      {2, Vec3(0, 0, -0.05), Vec3(0.0825, 0, 0), 0.07},
      {3, Vec3(0, 0, 0), Vec3(-0.0825, 0.384, 0), 0.06},
      {4, Vec3(0, 0, -0.03), Vec3(0, 0, 0.03), 0.06},
      {5, Vec3(0, 0, 0), Vec3(0.088, 0, 0), 0.06},
      {6, Vec3(0, 0, 0.02), Vec3(0, 0, 0.21), 0.065},
  };
  arm.self_collision_pairs = {
      {0, 4}, {0, 5}, {0, 6}, {0, 7},
      {1, 4}, {1, 5}, {1, 6}, {1, 7},
      {2, 4}, {2, 5}, {2, 6}, {2, 7},
      {3, 6}, {3, 7}, {4, 7},
  };
  return arm;
}

// ---------------------------------------------------------------------------
// JSON config (schema: docs/formats.md)
// ---------------------------------------------------------------------------

namespace {

Vec3 rotmat_to_rpy(const Mat3& r) {
  const double sy = -std::clamp(r(2, 0), -1.0, 1.0);
  const double pitch = std::asin(sy);
  if (std::abs(r(2, 0)) < 1.0 - 1e-9) {
    return Vec3(std::atan2(r(2, 1), r(2, 2)), pitch, std::atan2(r(1, 0), r(0, 0)));
  }
  // Gimbal lock: fold yaw into roll.
  if (r(2, 0) < 0)
    return Vec3(std::atan2(r(0, 1), r(0, 2)), pitch, 0.0);
  return Vec3(std::atan2(-r(0, 1), -r(0, 2)), pitch, 0.0);
}

json pose_to_json(const Pose& p) {
  const Vec3 rpy = rotmat_to_rpy(p.rotation);
  return json{{"pos", {p.position.x(), p.position.y(), p.position.z()}},
              {"rpy", {rpy.x(), rpy.y(), rpy.z()}}};
}

Pose pose_from_json(const json& j) {
  Pose p;
  for (int i = 0; i < 3; ++i) p.position[i] = j.at("pos").at(i).get<double>();
  const auto& rpy = j.at("rpy");
  p.rotation = rpy_to_rotmat(rpy.at(0).get<double>(), rpy.at(1).get<double>(),
                             rpy.at(2).get<double>());
  return p;
}

json vec3_to_json(const Vec3& v) { return json{v.x(), v.y(), v.z()}; }

Vec3 vec3_from_json(const json& j) {
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

}  // namespace

std::string arm_to_json(const ArmModel& arm) {
  json j;
  j["schema_version"] = 1;
  j["name"] = arm.name;
  j["links"] = json::array();
  for (const LinkSpec& l : arm.links) {
    j["links"].push_back(json{{"offset", pose_to_json(l.offset)},
                              {"axis", vec3_to_json(l.axis)},
                              {"limits", {l.lo, l.hi}}});
  }
  j["ee_offset"] = pose_to_json(arm.ee_offset);
  j["capsules"] = json::array();
  for (const ArmCapsule& c : arm.capsules) {
    j["capsules"].push_back(json{{"link", c.link},
                                 {"a", vec3_to_json(c.a)},
                                 {"b", vec3_to_json(c.b)},
                                 {"radius", c.radius}});
  }
  j["self_collision_pairs"] = json::array();
  for (const auto& [a, b] : arm.self_collision_pairs)
    j["self_collision_pairs"].push_back(json{a, b});
  return j.dump(2);
}

ArmModel arm_from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.at("schema_version").get<int>() != 1)
    throw SchemaMismatch("arm config: unsupported schema_version");
  ArmModel arm;
  arm.name = j.value("name", "arm");
  for (const auto& lj : j.at("links")) {
    LinkSpec l;
    l.offset = pose_from_json(lj.at("offset"));
    l.axis = vec3_from_json(lj.at("axis")).normalized();
    l.lo = lj.at("limits").at(0).get<double>();
    l.hi = lj.at("limits").at(1).get<double>();
    if (!(l.lo < l.hi)) throw ConfigError("arm config: joint limits must satisfy lo < hi");
    arm.links.push_back(l);
  }
  arm.ee_offset = pose_from_json(j.at("ee_offset"));
  for (const auto& cj : j.at("capsules")) {
    ArmCapsule c;
    c.link = cj.at("link").get<int>();
    c.a = vec3_from_json(cj.at("a"));
    c.b = vec3_from_json(cj.at("b"));
    c.radius = cj.at("radius").get<double>();
    if (c.radius <= 0) throw ConfigError("arm config: capsule radius must be positive");
    if (c.link < -1 || c.link >= arm.dof()) throw ConfigError("arm config: capsule link out of range");
    arm.capsules.push_back(c);
  }
  for (const auto& pj : j.at("self_collision_pairs")) {
    const int a = pj.at(0).get<int>(), b = pj.at(1).get<int>();
    const int n = static_cast<int>(arm.capsules.size());
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw ConfigError("arm config: self collision pair out of range");
    arm.self_collision_pairs.emplace_back(a, b);
  }
  return arm;
}

ArmModel load_arm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_arm: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return arm_from_json(ss.str());
}

void save_arm(const ArmModel& arm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_arm: cannot open " + path);
  out << arm_to_json(arm) << "\n";
}

}  // namespace ampls
