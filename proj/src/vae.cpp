#include "ampls/vae.hpp"

#include <chrono>
#include <cmath>
#include <iostream>

namespace ampls {

StateNormalizer StateNormalizer::for_arm(const ArmModel& arm, double position_extent) {
  const int n = arm.dof();
  StateNormalizer s;
  s.offset = Eigen::VectorXd::Zero(n + 9);
  s.scale = Eigen::VectorXd::Ones(n + 9);
  for (int i = 0; i < n; ++i) {
    s.offset[i] = 0.5 * (arm.links[i].lo + arm.links[i].hi);
    s.scale[i] = 0.5 * (arm.links[i].hi - arm.links[i].lo);
  }
  for (int i = 0; i < 3; ++i) s.scale[n + i] = position_extent;
  return s;
}

template <typename S>
VaeModel<S> VaeModel<S>::make(const StateNormalizer& norm, Rng& rng, std::vector<int> hidden) {
  VaeModel<S> m;
  m.norm = norm;
  m.state_dim = norm.dim();
  std::vector<int> enc{m.state_dim};
  enc.insert(enc.end(), hidden.begin(), hidden.end());
  enc.push_back(2 * m.latent_dim);
  std::vector<int> dec{m.latent_dim};
  dec.insert(dec.end(), hidden.begin(), hidden.end());
  dec.push_back(m.state_dim);
  m.encoder = Mlp<S>::make(enc, Mlp<S>::Output::Identity, rng, /*zero_last=*/true);
  m.decoder = Mlp<S>::make(dec, Mlp<S>::Output::Identity, rng);
  return m;
}

template <typename S>
std::pair<VecX<S>, VecX<S>> encode(const VaeModel<S>& m, const VecX<S>& x_norm) {
  if (x_norm.size() != m.state_dim) throw DimensionMismatch("encode: state dimension");
  const VecX<S> h = mlp_forward(m.encoder, x_norm);
  VecX<S> mu = h.head(m.latent_dim);
  VecX<S> logvar = h.tail(m.latent_dim)
                       .cwiseMax(S(-kLogvarClamp))
                       .cwiseMin(S(kLogvarClamp));
  return {mu, logvar};
}

template <typename S>
VecX<S> reparameterize(const VecX<S>& mu, const VecX<S>& logvar, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  VecX<S> z(mu.size());
  for (int i = 0; i < mu.size(); ++i)
    z[i] = mu[i] + std::exp(logvar[i] * S(0.5)) * static_cast<S>(gauss(rng));
  return z;
}

template <typename S>
VecX<S> decode(const VaeModel<S>& m, const VecX<S>& z) {
  if (z.size() != m.latent_dim) throw DimensionMismatch("decode: latent dimension");
  return mlp_forward(m.decoder, z);
}

template <typename S>
DecodedState decode_state(const VaeModel<S>& m, const VecX<S>& z) {
  const Eigen::VectorXd x = m.norm.denormalize(decode(m, z).template cast<double>());
  DecodedState out;
  const int n = m.state_dim - 9;
  out.q = x.head(n);
  out.e_pos = x.segment(n, 3);
  out.e_ori = x.tail(6);
  return out;
}

template <typename S>
VecX<S> encode_config_mean(const VaeModel<S>& m, const ArmModel& arm, const JointConfig& q) {
  const VecX<S> xn = m.norm.normalize(robot_state(arm, q).flatten()).template cast<S>();
  return encode(m, xn).first;
}

template <typename S>
double gaussian_kl(const VecX<S>& mu, const VecX<S>& logvar) {
  double kl = 0.0;
  for (int i = 0; i < mu.size(); ++i) {
    const double lv = logvar[i], m2 = double(mu[i]) * double(mu[i]);
    kl += 0.5 * (std::exp(lv) + m2 - 1.0 - lv);
  }
  return kl;
}

template <typename S>
ElboTerms elbo_terms(const VaeModel<S>& m, const VecX<S>& x_norm, Rng& rng) {
  auto [mu, logvar] = encode(m, x_norm);
  const VecX<S> z = reparameterize(mu, logvar, rng);
  const VecX<S> xhat = decode(m, z);
  ElboTerms t;
  t.recon_error = (xhat - x_norm).squaredNorm() / static_cast<double>(x_norm.size());
  t.kl = gaussian_kl(mu, logvar);
  return t;
}

namespace {

// One normalised state per column.
MatX<float> sample_state_batch(const ArmModel& arm, const StateNormalizer& norm,
                               int batch, Rng& rng) {
  MatX<float> x(norm.dim(), batch);
  for (int c = 0; c < batch; ++c) {
    const JointConfig q = sample_feasible_config(arm, rng);
    x.col(c) = norm.normalize(robot_state(arm, q).flatten()).cast<float>();
  }
  return x;
}

}  // namespace

std::pair<VaeModel<float>, VaeTrainSummary> train_vae(const VaeTrainConfig& cfg,
                                                      const ArmModel& arm, Rng& rng) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();

  StateNormalizer norm = StateNormalizer::for_arm(arm);
  VaeModel<float> model = VaeModel<float>::make(norm, rng, cfg.hidden);
  const int d = model.state_dim, k = model.latent_dim, b = cfg.batch_size;

  AdamState<float> opt_enc, opt_dec;
  opt_enc.lr = opt_dec.lr = static_cast<float>(cfg.learning_rate);

  GecoController geco = cfg.geco;
  geco.kappa = cfg.kappa_rec;

  // Held-out states with frozen evaluation noise so the metric is a pure
  // function of the parameters.
  const MatX<float> holdout = sample_state_batch(arm, norm, cfg.holdout_size, rng);
  MatX<float> holdout_eps(k, cfg.holdout_size);
  {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < holdout_eps.size(); ++i)
      holdout_eps.data()[i] = static_cast<float>(gauss(rng));
  }

  MlpTrace<float> enc_trace, dec_trace;
  MlpGrads<float> enc_grads, dec_grads;
  std::normal_distribution<double> gauss(0.0, 1.0);

  VaeTrainSummary summary;
  summary.lambda_min_seen = summary.lambda_max_seen = geco.lambda;
  double train_recon_ema = 0.0;
  bool train_ema_init = false;
  double holdout_ema = 0.0;
  bool holdout_ema_init = false;

  auto holdout_eval = [&]() {
    MlpTrace<float> trace;
    const MatX<float>& h = mlp_forward(model.encoder, holdout, trace);
    const MatX<float> mu = h.topRows(k);
    const MatX<float> lv = h.bottomRows(k)
                               .cwiseMax(-float(kLogvarClamp))
                               .cwiseMin(float(kLogvarClamp));
    const MatX<float> z =
        mu + (lv * 0.5f).array().exp().matrix().cwiseProduct(holdout_eps);
    const MatX<float> xhat = mlp_forward(model.decoder, z, trace);
    return static_cast<double>((xhat - holdout).squaredNorm()) /
           (static_cast<double>(d) * cfg.holdout_size);
  };

  for (long it = 0; it < cfg.iterations; ++it) {
    const MatX<float> x = sample_state_batch(arm, norm, b, rng);

    const MatX<float>& h = mlp_forward(model.encoder, x, enc_trace);
    const MatX<float> mu = h.topRows(k);
    const MatX<float> lv_raw = h.bottomRows(k);
    const MatX<float> lv =
        lv_raw.cwiseMax(-float(kLogvarClamp)).cwiseMin(float(kLogvarClamp));

    MatX<float> eps(k, b);
    for (int i = 0; i < eps.size(); ++i) eps.data()[i] = static_cast<float>(gauss(rng));
    const MatX<float> sigma = (lv * 0.5f).array().exp();
    const MatX<float> z = mu + sigma.cwiseProduct(eps);

    const MatX<float>& xhat = mlp_forward(model.decoder, z, dec_trace);

    const double recon =
        static_cast<double>((xhat - x).squaredNorm()) / (static_cast<double>(d) * b);
    const double kl =
        (lv.array().exp() + mu.array().square() - 1.0f - lv.array()).sum() * 0.5 / b;
    const double loss = kl + geco.lambda * recon;
    if (!std::isfinite(loss)) throw TrainingDiverged("train_vae: non-finite loss");

    // Backward: loss = KL + lambda * MSE, means over the batch.
    const float lam = static_cast<float>(geco.lambda);
    const MatX<float> dxhat = (2.0f * lam / float(d * b)) * (xhat - x);
    mlp_backward(model.decoder, dec_trace, dxhat, dec_grads);
    const MatX<float>& dz = dec_grads.d_input;

    MatX<float> dh(2 * k, b);
    dh.topRows(k) = dz + mu / float(b);
    MatX<float> dlv = dz.cwiseProduct(eps).cwiseProduct(sigma) * 0.5f +
                      (lv.array().exp() - 1.0f).matrix() * (0.5f / float(b));
    // Gradient does not flow where the clamp is active.
    dh.bottomRows(k) = dlv.cwiseProduct(lv_raw.unaryExpr(
        [](float v) { return std::abs(v) < float(kLogvarClamp) ? 1.0f : 0.0f; }));
    mlp_backward(model.encoder, enc_trace, dh, enc_grads);

    adam_step(opt_enc, model.encoder, enc_grads);
    adam_step(opt_dec, model.decoder, dec_grads);

    geco = geco_update(geco, recon);
    summary.lambda_min_seen = std::min(summary.lambda_min_seen, geco.lambda);
    summary.lambda_max_seen = std::max(summary.lambda_max_seen, geco.lambda);

    train_recon_ema = train_ema_init ? 0.99 * train_recon_ema + 0.01 * recon : recon;
    train_ema_init = true;
    summary.final_kl = kl;

    if ((it + 1) % cfg.holdout_every == 0 || it + 1 == cfg.iterations) {
      const double hr = holdout_eval();
      holdout_ema = holdout_ema_init
                        ? cfg.holdout_ema_decay * holdout_ema + (1.0 - cfg.holdout_ema_decay) * hr
                        : hr;
      holdout_ema_init = true;
      if (cfg.verbose && (it + 1) % (cfg.holdout_every * 20) == 0) {
        std::cerr << "[train_vae] it=" << it + 1 << " recon_ema=" << train_recon_ema
                  << " holdout_ema=" << holdout_ema << " kl=" << kl
                  << " lambda=" << geco.lambda << "\n";
      }
    }
  }

  summary.iterations = cfg.iterations;
  summary.final_lambda = geco.lambda;
  summary.final_train_recon_ema = train_recon_ema;
  summary.holdout_recon_ema = holdout_ema;
  summary.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return {std::move(model), summary};
}

// Explicit instantiations.
template struct VaeModel<float>;
template struct VaeModel<double>;
template std::pair<VecX<float>, VecX<float>> encode(const VaeModel<float>&, const VecX<float>&);
template std::pair<VecX<double>, VecX<double>> encode(const VaeModel<double>&, const VecX<double>&);
template VecX<float> reparameterize(const VecX<float>&, const VecX<float>&, Rng&);
template VecX<double> reparameterize(const VecX<double>&, const VecX<double>&, Rng&);
template VecX<float> decode(const VaeModel<float>&, const VecX<float>&);
template VecX<double> decode(const VaeModel<double>&, const VecX<double>&);
template DecodedState decode_state(const VaeModel<float>&, const VecX<float>&);
template DecodedState decode_state(const VaeModel<double>&, const VecX<double>&);
template VecX<float> encode_config_mean(const VaeModel<float>&, const ArmModel&, const JointConfig&);
template VecX<double> encode_config_mean(const VaeModel<double>&, const ArmModel&, const JointConfig&);
template double gaussian_kl(const VecX<float>&, const VecX<float>&);
template double gaussian_kl(const VecX<double>&, const VecX<double>&);
template ElboTerms elbo_terms(const VaeModel<float>&, const VecX<float>&, Rng&);
template ElboTerms elbo_terms(const VaeModel<double>&, const VecX<double>&, Rng&);

}  // namespace ampls
