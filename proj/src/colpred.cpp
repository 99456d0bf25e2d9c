#include "ampls/colpred.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <iostream>
#include <mutex>
#include <thread>

namespace ampls {

GridSpec GridSpec::make(const Aabb& bounds, double resolution) {
  GridSpec g;
  g.bounds = bounds;
  g.resolution = resolution;
  const Vec3 e = bounds.extent();
  g.nx = std::max(1, static_cast<int>(std::ceil(e.x() / resolution - 1e-9)));
  g.ny = std::max(1, static_cast<int>(std::ceil(e.y() / resolution - 1e-9)));
  g.nz = std::max(1, static_cast<int>(std::ceil(e.z() / resolution - 1e-9)));
  return g;
}

Vec3 GridSpec::centre(int linear_index) const {
  const int ix = linear_index % nx;
  const int iy = (linear_index / nx) % ny;
  const int iz = linear_index / (nx * ny);
  return bounds.min + resolution * Vec3(ix + 0.5, iy + 0.5, iz + 0.5);
}

VoxelGrid voxelize(const PointCloud& cloud, const GridSpec& spec) {
  VoxelGrid grid;
  grid.spec = spec;
  const int nvox = spec.voxel_count();
  grid.features = Eigen::MatrixXf::Zero(kVoxelFeatureDim, nvox);

  Eigen::VectorXi counts = Eigen::VectorXi::Zero(nvox);
  Eigen::Matrix3Xd sums = Eigen::Matrix3Xd::Zero(3, nvox);
  for (int i = 0; i < cloud.size(); ++i) {
    const Vec3 p = cloud.points.row(i).transpose();
    if (!spec.bounds.contains(p, 1e-12)) {
      ++grid.dropped_points;
      continue;
    }
    const Vec3 rel = (p - spec.bounds.min) / spec.resolution;
    const int ix = std::min(static_cast<int>(rel.x()), spec.nx - 1);
    const int iy = std::min(static_cast<int>(rel.y()), spec.ny - 1);
    const int iz = std::min(static_cast<int>(rel.z()), spec.nz - 1);
    const int v = spec.linear(ix, iy, iz);
    ++counts[v];
    sums.col(v) += p;
  }

  const double total = std::max(1, cloud.size());
  for (int v = 0; v < nvox; ++v) {
    if (counts[v] == 0) continue;
    grid.occupied.push_back(v);
    const Vec3 offset = sums.col(v) / counts[v] - spec.centre(v);
    grid.features(0, v) = static_cast<float>(counts[v] / total);
    grid.features(1, v) = static_cast<float>(offset.x());
    grid.features(2, v) = static_cast<float>(offset.y());
    grid.features(3, v) = static_cast<float>(offset.z());
    grid.features(4, v) = 1.0f;
  }
  return grid;
}

Eigen::VectorXd link_voxel_features(const VoxelGrid& grid, const std::vector<Pose>& frames,
                                    std::vector<int>* chosen) {
  const int L = static_cast<int>(frames.size());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(kPerLinkDim * L);
  if (chosen) chosen->assign(L, -1);
  for (int l = 0; l < L; ++l) {
    const Vec3& origin = frames[l].position;
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int v : grid.occupied) {
      const double d2 = (grid.spec.centre(v) - origin).squaredNorm();
      if (d2 < best_d2) {  // strict: ties keep the lowest linear index
        best_d2 = d2;
        best = v;
      }
    }
    const int base = kPerLinkDim * l;
    if (best < 0) {
      out[base + 4] = -1.0;  // sentinel occupancy
      continue;
    }
    if (chosen) (*chosen)[l] = best;
    for (int f = 0; f < kVoxelFeatureDim; ++f) out[base + f] = grid.features(f, best);
    out.segment<3>(base + 5) = grid.spec.centre(best) - origin;
    out.segment<6>(base + 8) = rotmat_to_6d(frames[l].rotation);
  }
  return out;
}

std::vector<Pose> predictor_frames(const FkResult& fk) {
  std::vector<Pose> frames = fk.link_frames;
  frames.push_back(fk.ee);
  return frames;
}

template <typename S>
CollisionPredictor<S> CollisionPredictor<S>::make(int link_count, const GridSpec& grid,
                                                  Rng& rng, std::vector<int> hidden) {
  CollisionPredictor<S> p;
  p.link_count = link_count;
  p.grid_spec = grid;
  std::vector<int> widths{p.input_dim()};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  p.classifier = Mlp<S>::make(widths, Mlp<S>::Output::Sigmoid, rng);
  return p;
}

template <typename S>
VecX<S> assemble_predictor_input(const CollisionPredictor<S>& pred, const VecX<S>& z,
                                 const VoxelGrid& grid, const std::vector<Pose>& frames,
                                 std::vector<int>* chosen) {
  if (static_cast<int>(frames.size()) != pred.link_count)
    throw DimensionMismatch("assemble_predictor_input: frame count");
  VecX<S> input(pred.input_dim());
  input.head(kLatentDim) = z;
  input.tail(kPerLinkDim * pred.link_count) =
      link_voxel_features(grid, frames, chosen).template cast<S>();
  return input;
}

template <typename S>
CollisionForward<S> collision_forward(const CollisionPredictor<S>& pred, const VecX<S>& z,
                                      const VoxelGrid& grid, const VaeModel<S>& vae,
                                      const ArmModel& arm) {
  CollisionForward<S> fwd;
  fwd.z = z;
  fwd.xhat = mlp_forward(vae.decoder, MatX<S>(z), fwd.dec_trace).col(0);
  const Eigen::VectorXd x = vae.norm.denormalize(fwd.xhat.template cast<double>());
  fwd.fkd = forward_kinematics_derivatives(arm, x.head(arm.dof()));
  const VecX<S> input = assemble_predictor_input(
      pred, z, grid, predictor_frames(fwd.fkd.fk), &fwd.chosen);
  fwd.p = mlp_forward(pred.classifier, MatX<S>(input), fwd.cls_trace)(0, 0);
  return fwd;
}

template <typename S>
CollisionPullback<S> collision_pullback(const CollisionPredictor<S>& pred,
                                        const CollisionForward<S>& fwd,
                                        const VaeModel<S>& vae, const ArmModel& arm, S d_p) {
  MlpGrads<S> cls_grads;
  MatX<S> d_out(1, 1);
  d_out(0, 0) = d_p;
  mlp_backward(pred.classifier, fwd.cls_trace, d_out, cls_grads);
  const VecX<S> d_input = cls_grads.d_input.col(0);

  CollisionPullback<S> pb;
  pb.dz_direct = d_input.head(kLatentDim);

  // Chain the per-frame translation and rotation slots through FK into dq.
  const int dof = arm.dof();
  Eigen::VectorXd dq = Eigen::VectorXd::Zero(dof);
  const std::vector<Pose> frames = predictor_frames(fwd.fkd.fk);
  for (int l = 0; l < pred.link_count; ++l) {
    if (fwd.chosen[l] < 0) continue;  // sentinel block is constant
    const int base = kLatentDim + kPerLinkDim * l;
    const Vec3 g_t = d_input.template segment<3>(base + 5).template cast<double>();
    const Eigen::Matrix<double, 6, 1> g_r =
        d_input.template segment<6>(base + 8).template cast<double>();
    const int link = std::min(l, dof - 1);
    const Vec3& p_frame = frames[l].position;
    const Mat3& r_frame = frames[l].rotation;
    for (int j = 0; j <= link; ++j) {
      const Vec3& w = fwd.fkd.joint_axes_world[j];
      // translation slot holds (voxel centre - frame origin)
      dq[j] -= g_t.dot(w.cross(p_frame - fwd.fkd.joint_origins_world[j]));
      dq[j] += g_r.template head<3>().dot(w.cross(Vec3(r_frame.col(0))));
      dq[j] += g_r.template tail<3>().dot(w.cross(Vec3(r_frame.col(1))));
    }
  }

  pb.dxhat = VecX<S>::Zero(vae.norm.dim());
  pb.dxhat.head(dof) =
      dq.cwiseProduct(vae.norm.scale.head(dof)).template cast<S>();
  return pb;
}

template <typename S>
S predict_collision(const CollisionPredictor<S>& pred, const VecX<S>& z,
                    const VoxelGrid& grid, const VaeModel<S>& vae, const ArmModel& arm) {
  return collision_forward(pred, z, grid, vae, arm).p;
}

template <typename S>
std::pair<S, VecX<S>> predict_collision_with_grad(const CollisionPredictor<S>& pred,
                                                  const VecX<S>& z, const VoxelGrid& grid,
                                                  const VaeModel<S>& vae, const ArmModel& arm) {
  const CollisionForward<S> fwd = collision_forward(pred, z, grid, vae, arm);
  const CollisionPullback<S> pb = collision_pullback(pred, fwd, vae, arm, S(1));
  MlpGrads<S> dec_grads;
  mlp_backward(vae.decoder, fwd.dec_trace, MatX<S>(pb.dxhat), dec_grads);
  return {fwd.p, VecX<S>(pb.dz_direct + dec_grads.d_input.col(0))};
}

VecX<float> predict_for_configs(const CollisionPredictor<float>& pred,
                                const VaeModel<float>& vae, const ArmModel& arm,
                                const VoxelGrid& grid, const std::vector<JointConfig>& configs) {
  const int n = static_cast<int>(configs.size());
  const int dof = arm.dof();
  MatX<float> x(vae.state_dim, n);
  for (int c = 0; c < n; ++c)
    x.col(c) = vae.norm.normalize(robot_state(arm, configs[c]).flatten()).cast<float>();

  MlpTrace<float> trace;
  const MatX<float> h = mlp_forward(vae.encoder, x, trace);
  const MatX<float> mu = h.topRows(kLatentDim);
  const MatX<float> xhat = mlp_forward(vae.decoder, mu, trace);

  MatX<float> inputs(pred.input_dim(), n);
  for (int c = 0; c < n; ++c) {
    const Eigen::VectorXd xd = vae.norm.denormalize(xhat.col(c).cast<double>());
    const FkResult fk = forward_kinematics(arm, xd.head(dof));
    inputs.col(c) = assemble_predictor_input<float>(pred, mu.col(c), grid,
                                                    predictor_frames(fk));
  }
  return mlp_forward(pred.classifier, inputs, trace).row(0).transpose();
}

ColBatch build_collision_batch(const CollisionPredictor<float>& pred,
                               const VaeModel<float>& vae, const ArmModel& arm,
                               const ColTrainConfig& cfg, Rng& rng) {
  const Scene scene = generate_scene(rng, cfg.scene);
  Vec3 centre = Vec3::Zero();
  for (const Primitive& p : scene.obstacles) centre += p.pose.position;
  if (!scene.obstacles.empty()) centre /= static_cast<double>(scene.obstacles.size());
  const CameraPose cam = sample_camera(rng, cfg.camera, centre);
  const PointCloud cloud = sample_point_cloud(scene, cam, cfg.cloud_points, rng, cfg.occlusion);
  const VoxelGrid grid = voxelize(cloud, pred.grid_spec);

  const int n = cfg.configs_per_iteration;
  const int dof = arm.dof();
  ColBatch batch;
  batch.labels.resize(n);
  MatX<float> x(vae.state_dim, n);
  std::vector<JointConfig> configs(n);
  for (int c = 0; c < n; ++c) {
    configs[c] = sample_feasible_config(arm, rng);
    const bool hit = oracle_collision(arm, configs[c], scene).colliding;
    batch.labels[c] = hit ? 1.0f : 0.0f;
    batch.positives += hit ? 1 : 0;
    x.col(c) = vae.norm.normalize(robot_state(arm, configs[c]).flatten()).cast<float>();
  }

  MlpTrace<float> trace;
  const MatX<float> h = mlp_forward(vae.encoder, x, trace);
  const MatX<float> mu = h.topRows(kLatentDim);
  const MatX<float> xhat = mlp_forward(vae.decoder, mu, trace);
  batch.inputs.resize(pred.input_dim(), n);
  for (int c = 0; c < n; ++c) {
    const Eigen::VectorXd xd = vae.norm.denormalize(xhat.col(c).cast<double>());
    const FkResult fk = forward_kinematics(arm, xd.head(dof));
    batch.inputs.col(c) = assemble_predictor_input<float>(pred, mu.col(c), grid,
                                                          predictor_frames(fk));
  }
  return batch;
}

namespace {

Rng rng_for_iteration(std::uint64_t seed, long it) {
  std::uint64_t h = fnv1a(&seed, sizeof(seed));
  h = fnv1a(&it, sizeof(it), h);
  return Rng(h);
}

}  // namespace

std::pair<CollisionPredictor<float>, ColTrainSummary> train_colpred(
    const VaeModel<float>& vae, const ArmModel& arm, const ColTrainConfig& cfg, Rng& rng) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();

  const GridSpec grid_spec = GridSpec::make(cfg.scene.workspace, cfg.grid_resolution);
  CollisionPredictor<float> pred =
      CollisionPredictor<float>::make(arm.dof() + 1, grid_spec, rng);

  SgdMomentumState<float> opt;
  opt.lr = static_cast<float>(cfg.learning_rate);
  opt.momentum = static_cast<float>(cfg.momentum);

  // Batches derive from (seed, iteration) only, so worker count never
  // changes results, only throughput. Workers grab iteration indices in
  // order and stall before building anything further than `depth` ahead of
  // the consumer cursor, which bounds the buffer without blocking the batch
  // the consumer is waiting for.
  std::mutex mu;
  std::condition_variable cv_space, cv_ready;
  bool stop = false;
  long cursor = 0;  // next iteration the trainer will consume
  const long depth = 2;
  std::vector<std::pair<long, ColBatch>> ready;  // guarded by mu
  std::vector<std::thread> workers;
  std::atomic<long> next_job{0};

  const bool async = cfg.data_workers > 1;
  const long n_workers = async ? cfg.data_workers - 1 : 0;
  long expected = 0;
  for (long w = 0; w < n_workers; ++w) {
    workers.emplace_back([&]() {
      while (true) {
        const long it = next_job.fetch_add(1);
        if (it >= cfg.iterations) return;
        {
          std::unique_lock<std::mutex> lock(mu);
          cv_space.wait(lock, [&] { return it < cursor + depth + n_workers || stop; });
          if (stop) return;
        }
        Rng r = rng_for_iteration(cfg.seed, it);
        ColBatch b = build_collision_batch(pred, vae, arm, cfg, r);
        std::lock_guard<std::mutex> lock(mu);
        if (stop) return;
        ready.emplace_back(it, std::move(b));
        cv_ready.notify_all();
      }
    });
  }

  auto next_batch = [&](long it) -> ColBatch {
    if (!async) {
      Rng r = rng_for_iteration(cfg.seed, it);
      return build_collision_batch(pred, vae, arm, cfg, r);
    }
    std::unique_lock<std::mutex> lock(mu);
    cv_ready.wait(lock, [&] {
      return std::any_of(ready.begin(), ready.end(),
                         [&](const auto& p) { return p.first == it; });
    });
    for (auto iter = ready.begin(); iter != ready.end(); ++iter) {
      if (iter->first == it) {
        ColBatch b = std::move(iter->second);
        ready.erase(iter);
        cursor = it + 1;
        cv_space.notify_all();
        return b;
      }
    }
    throw Error("train_colpred: batch pipeline inconsistency");
  };

  ColTrainSummary summary;
  MlpTrace<float> trace;
  MlpGrads<float> grads;
  double loss_ema = 0.0;
  bool ema_init = false;
  long total = 0, positives = 0;

  try {
    for (long it = 0; it < cfg.iterations; ++it) {
      const ColBatch batch = next_batch(it);
      const int n = static_cast<int>(batch.labels.size());
      total += n;
      positives += batch.positives;
      if (it == 99 && positives < 0.05 * total) {
        throw ConfigError(
            "train_colpred: fewer than 5% positive labels over the first 100 "
            "iterations; increase scene density or obstacle sizes");
      }

      mlp_forward(pred.classifier, batch.inputs, trace);
      const auto& logits = trace.pre.back();
      const auto& probs = trace.act.back();
      // BCE from logits, mean over the batch.
      double loss = 0.0;
      for (int c = 0; c < n; ++c) {
        const double l = logits(0, c), y = batch.labels[c];
        loss += std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::abs(l)));
      }
      loss /= n;
      if (!std::isfinite(loss)) throw TrainingDiverged("train_colpred: non-finite loss");

      MatX<float> delta = (probs.row(0) - batch.labels.transpose()) / static_cast<float>(n);
      mlp_backward_logits(pred.classifier, trace, delta, grads);
      sgd_momentum_step(opt, pred.classifier, grads);

      loss_ema = ema_init ? 0.99 * loss_ema + 0.01 * loss : loss;
      ema_init = true;
      if (cfg.verbose && (it + 1) % 200 == 0) {
        std::cerr << "[train_colpred] it=" << it + 1 << " loss_ema=" << loss_ema
                  << " pos_frac=" << static_cast<double>(positives) / total << "\n";
      }
      expected = it + 1;
    }
  } catch (...) {
    {
      std::lock_guard<std::mutex> lock(mu);
      stop = true;
      next_job.store(cfg.iterations);
    }
    cv_space.notify_all();
    for (auto& w : workers) w.join();
    throw;
  }
  {
    std::lock_guard<std::mutex> lock(mu);
    stop = true;
  }
  cv_space.notify_all();
  for (auto& w : workers) w.join();

  summary.iterations = expected;
  summary.positive_fraction = total > 0 ? static_cast<double>(positives) / total : 0.0;
  summary.final_loss_ema = loss_ema;
  summary.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return {std::move(pred), summary};
}

// Explicit instantiations.
template struct CollisionPredictor<float>;
template struct CollisionPredictor<double>;
template VecX<float> assemble_predictor_input(const CollisionPredictor<float>&, const VecX<float>&, const VoxelGrid&, const std::vector<Pose>&, std::vector<int>*);
template VecX<double> assemble_predictor_input(const CollisionPredictor<double>&, const VecX<double>&, const VoxelGrid&, const std::vector<Pose>&, std::vector<int>*);
template CollisionForward<float> collision_forward(const CollisionPredictor<float>&, const VecX<float>&, const VoxelGrid&, const VaeModel<float>&, const ArmModel&);
template CollisionForward<double> collision_forward(const CollisionPredictor<double>&, const VecX<double>&, const VoxelGrid&, const VaeModel<double>&, const ArmModel&);
template CollisionPullback<float> collision_pullback(const CollisionPredictor<float>&, const CollisionForward<float>&, const VaeModel<float>&, const ArmModel&, float);
template CollisionPullback<double> collision_pullback(const CollisionPredictor<double>&, const CollisionForward<double>&, const VaeModel<double>&, const ArmModel&, double);
template float predict_collision(const CollisionPredictor<float>&, const VecX<float>&, const VoxelGrid&, const VaeModel<float>&, const ArmModel&);
template double predict_collision(const CollisionPredictor<double>&, const VecX<double>&, const VoxelGrid&, const VaeModel<double>&, const ArmModel&);
template std::pair<float, VecX<float>> predict_collision_with_grad(const CollisionPredictor<float>&, const VecX<float>&, const VoxelGrid&, const VaeModel<float>&, const ArmModel&);
template std::pair<double, VecX<double>> predict_collision_with_grad(const CollisionPredictor<double>&, const VecX<double>&, const VoxelGrid&, const VaeModel<double>&, const ArmModel&);

}  // namespace ampls
