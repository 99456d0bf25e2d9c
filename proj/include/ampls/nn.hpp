// Minimal neural core: ELU MLPs with reverse-mode gradients for parameters
// and inputs, Adam / SGD-with-momentum, and the GECO multiplier controller.
// Compute types are templated on the scalar; training runs in float, the
// finite-difference test harness instantiates double.
#pragma once

#include "ampls/common.hpp"

#include <cmath>
#include <vector>

namespace ampls {

template <typename S>
struct Mlp {
  enum class Output { Identity, Sigmoid };

  std::vector<int> widths;        // e.g. {16, 512, 512, 512, 14}
  std::vector<MatX<S>> weights;   // per layer, out x in
  std::vector<VecX<S>> biases;
  Output output = Output::Identity;

  int in_dim() const { return widths.front(); }
  int out_dim() const { return widths.back(); }
  int layer_count() const { return static_cast<int>(weights.size()); }

  // He-initialised hidden layers; zero_last zeroes the final layer, used by
  // the VAE encoder head so an untrained model emits mu = logvar = 0.
  static Mlp make(std::vector<int> widths, Output out, Rng& rng, bool zero_last = false);

  template <typename T>
  Mlp<T> cast() const {
    Mlp<T> m;
    m.widths = widths;
    m.output = static_cast<typename Mlp<T>::Output>(static_cast<int>(output));
    for (const auto& w : weights) m.weights.push_back(w.template cast<T>());
    for (const auto& b : biases) m.biases.push_back(b.template cast<T>());
    return m;
  }
};

// Per-layer intermediates kept for the backward pass. Reused across calls;
// buffers only grow on demand.
template <typename S>
struct MlpTrace {
  MatX<S> input;               // in x batch
  std::vector<MatX<S>> pre;    // preactivation per layer
  std::vector<MatX<S>> act;    // activation per layer (act.back() is the output)
};

template <typename S>
struct MlpGrads {
  std::vector<MatX<S>> d_weights;
  std::vector<VecX<S>> d_biases;
  MatX<S> d_input;
};

template <typename S>
S elu(S x) {
  return x >= S(0) ? x : std::expm1(x);
}

// Columns are samples.
template <typename S>
const MatX<S>& mlp_forward(const Mlp<S>& m, const MatX<S>& x, MlpTrace<S>& trace);

template <typename S>
MatX<S> mlp_forward(const Mlp<S>& m, const MatX<S>& x);

template <typename S>
VecX<S> mlp_forward(const Mlp<S>& m, const VecX<S>& x);

// Exact reverse-mode gradients for parameters and the input, given the
// cotangent of the output (same shape as the forward output).
template <typename S>
MlpGrads<S> mlp_backward(const Mlp<S>& m, const MlpTrace<S>& trace, const MatX<S>& d_out);

template <typename S>
void mlp_backward(const Mlp<S>& m, const MlpTrace<S>& trace, const MatX<S>& d_out,
                  MlpGrads<S>& grads);

// Backward with d_pre as the cotangent of the final preactivation, bypassing
// the output activation (stable fused losses, e.g. BCE from logits).
template <typename S>
void mlp_backward_logits(const Mlp<S>& m, const MlpTrace<S>& trace, const MatX<S>& d_pre,
                         MlpGrads<S>& grads);

// ---------------------------------------------------------------------------
// Optimisers: operate on the matched (weights, biases) lists of an Mlp.
// ---------------------------------------------------------------------------

template <typename S>
struct AdamState {
  S lr = S(3e-4);
  S beta1 = S(0.9), beta2 = S(0.999), eps = S(1e-8);
  long step_count = 0;
  std::vector<MatX<S>> m_w, v_w;
  std::vector<VecX<S>> m_b, v_b;
};

template <typename S>
void adam_step(AdamState<S>& st, Mlp<S>& m, const MlpGrads<S>& g);

template <typename S>
struct SgdMomentumState {
  S lr = S(1e-3);
  S momentum = S(0.9);
  std::vector<MatX<S>> vel_w;
  std::vector<VecX<S>> vel_b;
};

template <typename S>
void sgd_momentum_step(SgdMomentumState<S>& st, Mlp<S>& m, const MlpGrads<S>& g);

// ---------------------------------------------------------------------------
// GECO Lagrange-multiplier controller: multiplicative update on an EMA of the
// constraint violation, clamped to [lambda_min, lambda_max].
// ---------------------------------------------------------------------------

struct GecoController {
  double lambda = 1.0;
  double kappa = 0.0;          // constraint target
  double ema = 0.0;
  bool ema_initialised = false;
  double beta = 0.99;          // EMA decay
  double eta = 1e-2;           // update rate
  double lambda_min = 1e-6, lambda_max = 1e4;
};

// ema <- beta*ema + (1-beta)*(value - kappa), seeded with the first violation;
// lambda <- clamp(lambda * exp(eta * ema)).
GecoController geco_update(GecoController c, double constraint_value);

}  // namespace ampls
