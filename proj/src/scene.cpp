#include "ampls/scene.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace ampls {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double surface_area(const Primitive& p) {
  switch (p.kind) {
    case PrimitiveKind::Sphere:
      return 4.0 * std::numbers::pi * p.dims[0] * p.dims[0];
    case PrimitiveKind::Box: {
      const Vec3& h = p.dims;
      return 8.0 * (h.x() * h.y() + h.y() * h.z() + h.x() * h.z());
    }
    case PrimitiveKind::Capsule: {
      const double r = p.dims[0], hl = p.dims[1];
      return kTwoPi * r * 2.0 * hl + 4.0 * std::numbers::pi * r * r;
    }
  }
  return 0.0;
}

Vec3 random_unit_vector(Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(gauss(rng), gauss(rng), gauss(rng));
  } while (v.squaredNorm() < 1e-12);
  return v.normalized();
}

Vec3 sample_primitive_surface(const Primitive& p, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec3 local;
  switch (p.kind) {
    case PrimitiveKind::Sphere:
      local = p.dims[0] * random_unit_vector(rng);
      break;
    case PrimitiveKind::Box: {
      const Vec3& h = p.dims;
      const double areas[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
      const double total = areas[0] + areas[1] + areas[2];
      double pick = unit(rng) * total;
      int axis = 0;
      while (axis < 2 && pick > areas[axis]) pick -= areas[axis], ++axis;
      const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
      local = Vec3((2 * unit(rng) - 1) * h.x(), (2 * unit(rng) - 1) * h.y(),
                   (2 * unit(rng) - 1) * h.z());
      local[axis] = sign * h[axis];
      break;
    }
    case PrimitiveKind::Capsule: {
      const double r = p.dims[0], hl = p.dims[1];
      const double a_cyl = kTwoPi * r * 2.0 * hl;
      const double a_caps = 4.0 * std::numbers::pi * r * r;
      if (unit(rng) * (a_cyl + a_caps) < a_cyl) {
        const double ang = unit(rng) * kTwoPi;
        local = Vec3(r * std::cos(ang), r * std::sin(ang), (2 * unit(rng) - 1) * hl);
      } else {
        const Vec3 d = random_unit_vector(rng);
        local = r * d + Vec3(0, 0, d.z() >= 0 ? hl : -hl);
      }
      break;
    }
  }
  return p.pose * local;
}

// Exact segment-vs-primitive hit tests used by the occlusion filter.
bool segment_hits_primitive(const Vec3& s0, const Vec3& s1, const Primitive& p) {
  switch (p.kind) {
    case PrimitiveKind::Sphere:
      return point_segment_distance(p.pose.position, s0, s1) < p.dims[0];
    case PrimitiveKind::Capsule: {
      const Vec3 axis(0, 0, p.dims[1]);
      const Vec3 a = p.pose * (-axis), b = p.pose * axis;
      return segment_segment_distance(s0, s1, a, b) < p.dims[0];
    }
    case PrimitiveKind::Box: {
      // Slab test in the box frame.
      const Pose inv = p.pose.inverse();
      const Vec3 o = inv * s0;
      const Vec3 d = inv.rotation * (s1 - s0);
      double tmin = 0.0, tmax = 1.0;
      for (int i = 0; i < 3; ++i) {
        if (std::abs(d[i]) < 1e-12) {
          if (std::abs(o[i]) > p.dims[i]) return false;
        } else {
          double t1 = (-p.dims[i] - o[i]) / d[i];
          double t2 = (p.dims[i] - o[i]) / d[i];
          if (t1 > t2) std::swap(t1, t2);
          tmin = std::max(tmin, t1);
          tmax = std::min(tmax, t2);
          if (tmin > tmax) return false;
        }
      }
      return true;
    }
  }
  return false;
}

Vec3 scene_centre(const Scene& scene) {
  if (scene.obstacles.empty()) {
    Vec3 c = scene.workspace.centre();
    c.z() = scene.table_height + 0.1;
    return c;
  }
  Vec3 c = Vec3::Zero();
  for (const Primitive& p : scene.obstacles) c += p.pose.position;
  return c / static_cast<double>(scene.obstacles.size());
}

}  // namespace

Scene generate_scene(Rng& rng, const SceneGenParams& params) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> count_dist(params.min_obstacles, params.max_obstacles);
  std::uniform_int_distribution<int> kind_dist(0, 2);

  auto in_range = [&](const Eigen::Vector2d& r) { return r[0] + (r[1] - r[0]) * unit(rng); };

  Scene scene;
  scene.table_height = params.table_height;
  scene.workspace = params.workspace;
  const int n = count_dist(rng);
  scene.obstacles.reserve(n);
  for (int i = 0; i < n; ++i) {
    Primitive p;
    p.kind = static_cast<PrimitiveKind>(kind_dist(rng));
    const double x = params.placement_min.x() +
                     (params.placement_max.x() - params.placement_min.x()) * unit(rng);
    const double y = params.placement_min.y() +
                     (params.placement_max.y() - params.placement_min.y()) * unit(rng);
    const double yaw = kTwoPi * unit(rng);
    double rest = 0.0;
    switch (p.kind) {
      case PrimitiveKind::Sphere:
        p.dims = Vec3(in_range(params.sphere_radius), 0, 0);
        rest = p.dims[0];
        break;
      case PrimitiveKind::Box:
        p.dims = Vec3(in_range(params.box_half_extent), in_range(params.box_half_extent),
                      in_range(params.box_half_extent));
        rest = p.dims[2];
        break;
      case PrimitiveKind::Capsule:
        p.dims = Vec3(in_range(params.capsule_radius), in_range(params.capsule_half_length), 0);
        rest = p.dims[1] + p.dims[0];
        break;
    }
    p.pose = Pose(Vec3(x, y, params.table_height + rest), axis_angle(Vec3::UnitZ(), yaw));
    scene.obstacles.push_back(p);
  }
  return scene;
}

CameraPose sample_camera(Rng& rng, const CameraParams& params, const Vec3& centre) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double deg = std::numbers::pi / 180.0;
  const double radius = params.radius_min + (params.radius_max - params.radius_min) * unit(rng);
  const double el = (params.elevation_min_deg +
                     (params.elevation_max_deg - params.elevation_min_deg) * unit(rng)) * deg;
  const double az = (params.azimuth_min_deg +
                     (params.azimuth_max_deg - params.azimuth_min_deg) * unit(rng)) * deg;
  const Vec3 pos = centre + radius * Vec3(std::cos(el) * std::cos(az),
                                          std::cos(el) * std::sin(az), std::sin(el));
  const Vec3 z = (centre - pos).normalized();  // viewing direction
  Vec3 x = z.cross(Vec3::UnitZ());
  if (x.squaredNorm() < 1e-10) x = Vec3::UnitX();
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return CameraPose{Pose(pos, r)};
}

PointCloud sample_point_cloud(const Scene& scene, const CameraPose& cam, int n,
                              Rng& rng, bool occlusion) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Aabb& ws = scene.workspace;
  const double table_area = ws.extent().x() * ws.extent().y();

  std::vector<double> cum;  // cumulative areas; table is entry 0
  cum.push_back(table_area);
  for (const Primitive& p : scene.obstacles) cum.push_back(cum.back() + surface_area(p));
  const double total = cum.back();

  std::vector<Vec3> accepted;
  accepted.reserve(n);
  const long max_draws = 20L * n;
  for (long draw = 0; draw < max_draws && static_cast<int>(accepted.size()) < n; ++draw) {
    const double pick = unit(rng) * total;
    const int idx = static_cast<int>(std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin());
    Vec3 pt;
    if (idx == 0) {
      pt = Vec3(ws.min.x() + ws.extent().x() * unit(rng),
                ws.min.y() + ws.extent().y() * unit(rng), scene.table_height);
    } else {
      pt = sample_primitive_surface(scene.obstacles[idx - 1], rng);
    }
    if (!ws.contains(pt, 1e-9)) continue;
    if (occlusion) {
      const Vec3 dir = cam.extrinsics.position - pt;
      const Vec3 start = pt + 1e-6 * dir;  // step off the source surface
      bool blocked = false;
      for (int k = 0; k < static_cast<int>(scene.obstacles.size()) && !blocked; ++k) {
        if (k == idx - 1) continue;  // a point never occludes itself on its own primitive
        blocked = segment_hits_primitive(start, cam.extrinsics.position, scene.obstacles[k]);
      }
      if (blocked) continue;
    }
    accepted.push_back(pt);
  }

  PointCloud cloud;
  cloud.points.resize(static_cast<int>(accepted.size()), 3);
  for (int i = 0; i < cloud.size(); ++i) cloud.points.row(i) = accepted[i].transpose();
  return cloud;
}

double point_primitive_distance(const Vec3& p, const Primitive& prim) {
  switch (prim.kind) {
    case PrimitiveKind::Sphere:
      return (p - prim.pose.position).norm() - prim.dims[0];
    case PrimitiveKind::Capsule: {
      const Vec3 axis(0, 0, prim.dims[1]);
      return point_segment_distance(p, prim.pose * (-axis), prim.pose * axis) - prim.dims[0];
    }
    case PrimitiveKind::Box: {
      const Vec3 local = prim.pose.inverse() * p;
      const Vec3 d = local.cwiseAbs() - prim.dims;
      const double outside = d.cwiseMax(0.0).norm();
      return outside > 0.0 ? outside : d.maxCoeff();
    }
  }
  return 0.0;
}

double capsule_primitive_distance(const Vec3& a, const Vec3& b, double radius,
                                  const Primitive& prim) {
  switch (prim.kind) {
    case PrimitiveKind::Sphere:
      return point_segment_distance(prim.pose.position, a, b) - radius - prim.dims[0];
    case PrimitiveKind::Capsule: {
      const Vec3 axis(0, 0, prim.dims[1]);
      return segment_segment_distance(a, b, prim.pose * (-axis), prim.pose * axis) -
             radius - prim.dims[0];
    }
    case PrimitiveKind::Box: {
      // Distance from a point on the segment to the box is convex in the
      // segment parameter while outside; coarse 64-interval scan, then
      // ternary refinement around the best sample.
      auto g = [&](double t) {
        return point_primitive_distance(a + t * (b - a), prim);
      };
      constexpr int kSamples = 64;
      double best_t = 0.0, best = g(0.0);
      for (int i = 1; i <= kSamples; ++i) {
        const double t = static_cast<double>(i) / kSamples;
        const double v = g(t);
        if (v < best) best = v, best_t = t;
      }
      double lo = std::max(0.0, best_t - 1.0 / kSamples);
      double hi = std::min(1.0, best_t + 1.0 / kSamples);
      for (int it = 0; it < 48; ++it) {
        const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
        if (g(m1) <= g(m2)) hi = m2; else lo = m1;
      }
      best = std::min(best, g(0.5 * (lo + hi)));
      return best - radius;
    }
  }
  return 0.0;
}

OracleResult oracle_collision(const std::vector<WorldCapsule>& caps, const Scene& scene) {
  OracleResult out;
  out.min_clearance = std::numeric_limits<double>::infinity();
  for (const WorldCapsule& c : caps) {
    if (c.table_check) {
      const double d = std::min(c.a.z(), c.b.z()) - scene.table_height - c.radius;
      out.min_clearance = std::min(out.min_clearance, d);
    }
    for (const Primitive& p : scene.obstacles) {
      const double d = capsule_primitive_distance(c.a, c.b, c.radius, p);
      out.min_clearance = std::min(out.min_clearance, d);
    }
  }
  out.colliding = out.min_clearance < 0.0;
  return out;
}

OracleResult oracle_collision(const ArmModel& arm, const JointConfig& q, const Scene& scene) {
  return oracle_collision(world_capsules(arm, forward_kinematics(arm, q)), scene);
}

// ---------------------------------------------------------------------------
// Serialisation
// ---------------------------------------------------------------------------

namespace {

const char* kind_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::Sphere: return "sphere";
    case PrimitiveKind::Box: return "box";
    case PrimitiveKind::Capsule: return "capsule";
  }
  return "?";
}

PrimitiveKind kind_from_name(const std::string& s) {
  if (s == "sphere") return PrimitiveKind::Sphere;
  if (s == "box") return PrimitiveKind::Box;
  if (s == "capsule") return PrimitiveKind::Capsule;
  throw ConfigError("scene: unknown primitive kind " + s);
}

}  // namespace

std::string scene_to_json(const Scene& scene) {
  json j;
  j["schema_version"] = 1;
  j["table_height"] = scene.table_height;
  j["workspace"] = {{"min", {scene.workspace.min.x(), scene.workspace.min.y(), scene.workspace.min.z()}},
                    {"max", {scene.workspace.max.x(), scene.workspace.max.y(), scene.workspace.max.z()}}};
  j["obstacles"] = json::array();
  for (const Primitive& p : scene.obstacles) {
    json o;
    o["kind"] = kind_name(p.kind);
    o["pos"] = {p.pose.position.x(), p.pose.position.y(), p.pose.position.z()};
    const double yaw = std::atan2(p.pose.rotation(1, 0), p.pose.rotation(0, 0));
    o["yaw"] = yaw;
    o["dims"] = {p.dims[0], p.dims[1], p.dims[2]};
    j["obstacles"].push_back(o);
  }
  return j.dump(2);
}

Scene scene_from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.at("schema_version").get<int>() != 1)
    throw SchemaMismatch("scene: unsupported schema_version");
  Scene scene;
  scene.table_height = j.at("table_height").get<double>();
  for (int i = 0; i < 3; ++i) {
    scene.workspace.min[i] = j.at("workspace").at("min").at(i).get<double>();
    scene.workspace.max[i] = j.at("workspace").at("max").at(i).get<double>();
  }
  for (const auto& o : j.at("obstacles")) {
    Primitive p;
    p.kind = kind_from_name(o.at("kind").get<std::string>());
    Vec3 pos;
    for (int i = 0; i < 3; ++i) pos[i] = o.at("pos").at(i).get<double>();
    p.pose = Pose(pos, axis_angle(Vec3::UnitZ(), o.at("yaw").get<double>()));
    for (int i = 0; i < 3; ++i) p.dims[i] = o.at("dims").at(i).get<double>();
    scene.obstacles.push_back(p);
  }
  return scene;
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_scene: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return scene_from_json(ss.str());
}

void save_scene(const Scene& scene, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_scene: cannot open " + path);
  out << scene_to_json(scene) << "\n";
}

void save_point_cloud(const PointCloud& cloud, const std::string& path_bin) {
  std::ofstream out(path_bin, std::ios::binary);
  if (!out) throw Error("save_point_cloud: cannot open " + path_bin);
  for (int i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      const float v = static_cast<float>(cloud.points(i, k));
      out.write(reinterpret_cast<const char*>(&v), sizeof(float));
    }
  }
  json side;
  side["count"] = cloud.size();
  side["units"] = "m";
  side["layout"] = "xyz_f32_le";
  std::ofstream sj(path_bin + ".json");
  sj << side.dump(2) << "\n";
}

PointCloud load_point_cloud(const std::string& path_bin) {
  std::ifstream side(path_bin + ".json");
  if (!side) throw Error("load_point_cloud: missing sidecar for " + path_bin);
  json meta = json::parse(side);
  const int n = meta.at("count").get<int>();
  std::ifstream in(path_bin, std::ios::binary);
  if (!in) throw Error("load_point_cloud: cannot open " + path_bin);
  PointCloud cloud;
  cloud.points.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) {
      float v = 0;
      in.read(reinterpret_cast<char*>(&v), sizeof(float));
      cloud.points(i, k) = v;
    }
  }
  if (!in) throw CorruptBlob("load_point_cloud: blob shorter than sidecar count");
  return cloud;
}

}  // namespace ampls
