// Procedural tabletop scenes, surface-sampled point clouds, and the analytic
// capsule-vs-primitive collision oracle used for labels and evaluation.
#pragma once

#include "ampls/kinematics.hpp"

#include <optional>
#include <vector>

namespace ampls {

enum class PrimitiveKind { Sphere, Box, Capsule };

// dims by kind: sphere (radius, -, -); box (half extents x,y,z);
// capsule (radius, half_length, -), local axis z.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Sphere;
  Pose pose;
  Vec3 dims = Vec3::Zero();
};

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  Vec3 extent() const { return max - min; }
  Vec3 centre() const { return 0.5 * (min + max); }
  bool contains(const Vec3& p, double tol = 0.0) const {
    return (p.array() >= min.array() - tol).all() && (p.array() <= max.array() + tol).all();
  }
};

struct Scene {
  double table_height = 0.0;
  std::vector<Primitive> obstacles;
  Aabb workspace;
};

struct PointCloud {
  Eigen::Matrix<double, Eigen::Dynamic, 3> points;  // rows = points, metres
  int size() const { return static_cast<int>(points.rows()); }
};

struct CameraPose {
  Pose extrinsics;  // camera frame in world; local +z is the viewing direction
};

struct CameraParams {
  double radius_min = 1.2, radius_max = 1.8;
  double elevation_min_deg = 25.0, elevation_max_deg = 65.0;
  double azimuth_min_deg = -180.0, azimuth_max_deg = 180.0;
};

struct SceneGenParams {
  double table_height = 0.0;
  Aabb workspace{Vec3(-0.1, -0.6, 0.0), Vec3(1.1, 0.6, 0.8)};
  // Obstacle centres are placed uniformly over this table rectangle (x, y).
  Eigen::Vector2d placement_min{0.25, -0.42};
  Eigen::Vector2d placement_max{0.72, 0.42};
  int min_obstacles = 4, max_obstacles = 8;
  Eigen::Vector2d sphere_radius{0.035, 0.08};
  Eigen::Vector2d box_half_extent{0.03, 0.09};
  Eigen::Vector2d capsule_radius{0.025, 0.05};
  Eigen::Vector2d capsule_half_length{0.05, 0.14};
};

// Obstacle count uniform in [min,max]; kinds uniform; yaw uniform in [0, 2pi);
// every obstacle rests on the table plane. Overlaps are allowed.
Scene generate_scene(Rng& rng, const SceneGenParams& params);

CameraPose sample_camera(Rng& rng, const CameraParams& params, const Vec3& scene_centre);

// n points drawn area-weighted from obstacle surfaces and the table rectangle.
// With occlusion on, a point is kept only if the open segment from it to the
// camera origin misses every *other* primitive; sampling gives up and returns
// fewer points after 20*n draws.
PointCloud sample_point_cloud(const Scene& scene, const CameraPose& cam, int n,
                              Rng& rng, bool occlusion = false);

// Signed distance between a world capsule (segment + radius) and a primitive.
// Exact for sphere/capsule; boxes use a 64-sample segment discretisation with
// local ternary refinement (error < 1e-3 for default sizes).
double capsule_primitive_distance(const Vec3& a, const Vec3& b, double radius,
                                  const Primitive& prim);

// Signed distance from a point to a primitive surface (negative inside).
double point_primitive_distance(const Vec3& p, const Primitive& prim);

struct OracleResult {
  bool colliding = false;
  double min_clearance = 0.0;  // negative iff colliding
};

// Ground-truth collision between the arm's capsules and the scene: every
// primitive, plus the table half-space for link-attached capsules (base
// capsules belong to the mount and are exempt from the table check).
OracleResult oracle_collision(const ArmModel& arm, const JointConfig& q, const Scene& scene);
OracleResult oracle_collision(const std::vector<WorldCapsule>& caps, const Scene& scene);

// Scene (de)serialisation; schema in docs/formats.md.
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);
Scene load_scene(const std::string& path);
void save_scene(const Scene& scene, const std::string& path);

// Binary little-endian f32 xyz triples with a JSON sidecar (count, units).
void save_point_cloud(const PointCloud& cloud, const std::string& path_bin);
PointCloud load_point_cloud(const std::string& path_bin);

}  // namespace ampls
