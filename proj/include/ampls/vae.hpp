// Encoder/decoder over flattened robot states with GECO-constrained ELBO
// training on streamed feasible configurations.
#pragma once

#include "ampls/kinematics.hpp"
#include "ampls/nn.hpp"

namespace ampls {

inline constexpr int kLatentDim = 7;
inline constexpr double kLogvarClamp = 10.0;

// Per-dimension affine map to normalised units: x_norm = (x - offset) / scale.
// Joints scale to [-1,1] by limits; positions by the reach extent; the 6D
// orientation block is left raw.
struct StateNormalizer {
  Eigen::VectorXd offset, scale;

  static StateNormalizer for_arm(const ArmModel& arm, double position_extent = 1.2);

  Eigen::VectorXd normalize(const Eigen::VectorXd& x) const {
    return (x - offset).cwiseQuotient(scale);
  }
  Eigen::VectorXd denormalize(const Eigen::VectorXd& xn) const {
    return offset + xn.cwiseProduct(scale);
  }
  int dim() const { return static_cast<int>(offset.size()); }
};

template <typename S>
struct VaeModel {
  Mlp<S> encoder;  // state_dim -> hidden -> 2 * latent (mu ; logvar)
  Mlp<S> decoder;  // latent -> hidden -> state_dim
  StateNormalizer norm;
  int latent_dim = kLatentDim;
  int state_dim = 16;

  static VaeModel make(const StateNormalizer& norm, Rng& rng,
                       std::vector<int> hidden = {512, 512, 512});

  template <typename T>
  VaeModel<T> cast() const {
    VaeModel<T> m;
    m.encoder = encoder.template cast<T>();
    m.decoder = decoder.template cast<T>();
    m.norm = norm;
    m.latent_dim = latent_dim;
    m.state_dim = state_dim;
    return m;
  }
};

// Deterministic posterior parameters for a normalised state; logvar clamped
// to [-kLogvarClamp, kLogvarClamp].
template <typename S>
std::pair<VecX<S>, VecX<S>> encode(const VaeModel<S>& m, const VecX<S>& x_norm);

template <typename S>
VecX<S> reparameterize(const VecX<S>& mu, const VecX<S>& logvar, Rng& rng);

template <typename S>
VecX<S> decode(const VaeModel<S>& m, const VecX<S>& z);

// Decoded state split by the RobotState layout and mapped back to physical
// units (double precision).
struct DecodedState {
  Eigen::VectorXd q;
  Vec3 e_pos;
  Rot6d e_ori;
};

template <typename S>
DecodedState decode_state(const VaeModel<S>& m, const VecX<S>& z);

// Convenience: posterior mean of a joint configuration's robot state.
template <typename S>
VecX<S> encode_config_mean(const VaeModel<S>& m, const ArmModel& arm, const JointConfig& q);

struct ElboTerms {
  double recon_error;  // MSE over the normalised state
  double kl;
};

template <typename S>
ElboTerms elbo_terms(const VaeModel<S>& m, const VecX<S>& x_norm, Rng& rng);

// Closed-form KL(N(mu, diag exp(logvar)) || N(0, I)).
template <typename S>
double gaussian_kl(const VecX<S>& mu, const VecX<S>& logvar);

struct VaeTrainConfig {
  int batch_size = 256;
  double learning_rate = 3e-4;
  long iterations = 50000;
  double kappa_rec = 1e-3;
  std::uint64_t seed = 0;
  GecoController geco{1.0, 1e-3, 0.0, false, 0.99, 1e-2, 1e-6, 1e4};
  int holdout_size = 1024;
  long holdout_every = 250;
  double holdout_ema_decay = 0.9;
  std::vector<int> hidden = {512, 512, 512};
  bool verbose = false;
};

struct VaeTrainSummary {
  long iterations = 0;
  double final_lambda = 0.0;
  double lambda_min_seen = 0.0, lambda_max_seen = 0.0;
  double final_train_recon_ema = 0.0;
  double holdout_recon_ema = 0.0;
  double final_kl = 0.0;
  double wall_seconds = 0.0;
};

// Streams fresh feasible-configuration batches every iteration and minimises
// KL + lambda * recon with lambda driven by GECO on the reconstruction error.
// Throws TrainingDiverged on a non-finite loss.
std::pair<VaeModel<float>, VaeTrainSummary> train_vae(const VaeTrainConfig& cfg,
                                                      const ArmModel& arm, Rng& rng);

}  // namespace ampls
