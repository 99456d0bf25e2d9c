// Scene-conditioned collision probability p(z, o): voxel featurisation of the
// point cloud, per-link nearest-voxel features, and an MLP classifier over
// (z, features) trained against the analytic oracle with the VAE frozen.
#pragma once

#include "ampls/scene.hpp"
#include "ampls/vae.hpp"

namespace ampls {

inline constexpr int kVoxelFeatureDim = 5;  // count_norm, centroid offset xyz, occupancy
inline constexpr int kPerLinkDim = kVoxelFeatureDim + 3 + 6;

struct GridSpec {
  Aabb bounds;
  double resolution = 0.05;
  int nx = 0, ny = 0, nz = 0;

  static GridSpec make(const Aabb& bounds, double resolution);
  int voxel_count() const { return nx * ny * nz; }
  int linear(int ix, int iy, int iz) const { return ix + nx * (iy + ny * iz); }
  Vec3 centre(int linear_index) const;
};

struct VoxelGrid {
  GridSpec spec;
  // Column per voxel: (normalised point count, centroid offset xyz, occupancy).
  Eigen::MatrixXf features;
  std::vector<int> occupied;  // ascending linear indices
  int dropped_points = 0;
};

VoxelGrid voxelize(const PointCloud& cloud, const GridSpec& spec);

// Per-frame feature block: nearest occupied voxel to the frame origin (ties
// resolved to the lowest linear index), its features, the translation from
// the frame origin to the voxel centre, and the frame rotation as 6D. With no
// occupied voxel the block is zero except occupancy = -1.
// Returns the chosen voxel per frame (-1 for the sentinel).
Eigen::VectorXd link_voxel_features(const VoxelGrid& grid, const std::vector<Pose>& frames,
                                    std::vector<int>* chosen = nullptr);

template <typename S>
struct CollisionPredictor {
  Mlp<S> classifier;  // input -> hidden -> 1, sigmoid
  int link_count = 8;  // jointed link frames + end-effector frame
  GridSpec grid_spec;

  int input_dim() const { return kLatentDim + kPerLinkDim * link_count; }

  static CollisionPredictor make(int link_count, const GridSpec& grid, Rng& rng,
                                 std::vector<int> hidden = {1024, 256});

  template <typename T>
  CollisionPredictor<T> cast() const {
    CollisionPredictor<T> p;
    p.classifier = classifier.template cast<T>();
    p.link_count = link_count;
    p.grid_spec = grid_spec;
    return p;
  }
};

// Frames fed to the classifier: all jointed link frames plus the end-effector.
std::vector<Pose> predictor_frames(const FkResult& fk);

template <typename S>
VecX<S> assemble_predictor_input(const CollisionPredictor<S>& pred, const VecX<S>& z,
                                 const VoxelGrid& grid, const std::vector<Pose>& frames,
                                 std::vector<int>* chosen = nullptr);

// Forward pieces kept so the planner can merge decoder cotangents from the
// target losses with the collision chain in a single backward pass.
template <typename S>
struct CollisionForward {
  S p = S(0);
  VecX<S> z;
  VecX<S> xhat;  // decoded normalised state
  MlpTrace<S> dec_trace;
  MlpTrace<S> cls_trace;
  FkDerivatives fkd;
  std::vector<int> chosen;  // voxel per frame, -1 sentinel
};

template <typename S>
CollisionForward<S> collision_forward(const CollisionPredictor<S>& pred, const VecX<S>& z,
                                      const VoxelGrid& grid, const VaeModel<S>& vae,
                                      const ArmModel& arm);

// Pullback of d_p through the classifier and the FK feature chain, stopping at
// the decoder boundary: returns the direct dz contribution (classifier z head)
// and the cotangent of the decoded normalised state.
template <typename S>
struct CollisionPullback {
  VecX<S> dz_direct;
  VecX<S> dxhat;
};

template <typename S>
CollisionPullback<S> collision_pullback(const CollisionPredictor<S>& pred,
                                        const CollisionForward<S>& fwd,
                                        const VaeModel<S>& vae, const ArmModel& arm, S d_p);

template <typename S>
S predict_collision(const CollisionPredictor<S>& pred, const VecX<S>& z,
                    const VoxelGrid& grid, const VaeModel<S>& vae, const ArmModel& arm);

// (p, dp/dz), differentiable through the decoder, FK frames, and the z head.
template <typename S>
std::pair<S, VecX<S>> predict_collision_with_grad(const CollisionPredictor<S>& pred,
                                                  const VecX<S>& z, const VoxelGrid& grid,
                                                  const VaeModel<S>& vae, const ArmModel& arm);

// Batched predictor evaluation at the encoded posterior means of joint
// configurations (the checker used for interpolated states).
VecX<float> predict_for_configs(const CollisionPredictor<float>& pred,
                                const VaeModel<float>& vae, const ArmModel& arm,
                                const VoxelGrid& grid, const std::vector<JointConfig>& configs);

struct ColTrainConfig {
  int configs_per_iteration = 2048;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  long iterations = 6000;
  std::uint64_t seed = 0;
  SceneGenParams scene;
  CameraParams camera;
  int cloud_points = 2048;
  bool occlusion = true;
  double grid_resolution = 0.05;
  int data_workers = 1;  // >1 overlaps batch generation with optimisation
  bool verbose = false;
};

struct ColTrainSummary {
  long iterations = 0;
  double positive_fraction = 0.0;
  double final_loss_ema = 0.0;
  double wall_seconds = 0.0;
};

struct ColBatch {
  MatX<float> inputs;   // input_dim x n
  VecX<float> labels;   // 0/1
  int positives = 0;
};

// One training iteration's data: fresh scene, camera, cloud, grid, feasible
// configurations, oracle labels, and assembled classifier inputs.
ColBatch build_collision_batch(const CollisionPredictor<float>& pred,
                               const VaeModel<float>& vae, const ArmModel& arm,
                               const ColTrainConfig& cfg, Rng& rng);

// BCE training with SGD momentum; the VAE is read-only throughout.
// Raises ConfigError if labels run below 5% positives over the first 100
// iterations (scene density misconfigured).
std::pair<CollisionPredictor<float>, ColTrainSummary> train_colpred(
    const VaeModel<float>& vae, const ArmModel& arm, const ColTrainConfig& cfg, Rng& rng);

}  // namespace ampls
