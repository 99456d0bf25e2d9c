#include "ampls/nn.hpp"

#include <algorithm>
#include <cmath>

namespace ampls {

template <typename S>
Mlp<S> Mlp<S>::make(std::vector<int> widths, Output out, Rng& rng, bool zero_last) {
  if (widths.size() < 2) throw DimensionMismatch("Mlp::make: need at least two widths");
  Mlp<S> m;
  m.widths = std::move(widths);
  m.output = out;
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int layers = static_cast<int>(m.widths.size()) - 1;
  for (int l = 0; l < layers; ++l) {
    const int rows = m.widths[l + 1], cols = m.widths[l];
    MatX<S> w(rows, cols);
    if (zero_last && l == layers - 1) {
      w.setZero();
    } else {
      const double scale = std::sqrt(2.0 / cols);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) w(i, j) = static_cast<S>(scale * gauss(rng));
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(VecX<S>::Zero(rows));
  }
  return m;
}

template <typename S>
const MatX<S>& mlp_forward(const Mlp<S>& m, const MatX<S>& x, MlpTrace<S>& trace) {
  if (x.rows() != m.in_dim()) throw DimensionMismatch("mlp_forward: input dimension");
  const int layers = m.layer_count();
  trace.input = x;
  trace.pre.resize(layers);
  trace.act.resize(layers);
  const MatX<S>* h = &trace.input;
  for (int l = 0; l < layers; ++l) {
    trace.pre[l].noalias() = m.weights[l] * (*h);
    trace.pre[l].colwise() += m.biases[l];
    if (l + 1 < layers) {
      trace.act[l] = trace.pre[l].unaryExpr([](S v) { return elu(v); });
    } else if (m.output == Mlp<S>::Output::Sigmoid) {
      trace.act[l] = trace.pre[l].unaryExpr(
          [](S v) { return S(1) / (S(1) + std::exp(-v)); });
    } else {
      trace.act[l] = trace.pre[l];
    }
    h = &trace.act[l];
  }
  return trace.act.back();
}

template <typename S>
MatX<S> mlp_forward(const Mlp<S>& m, const MatX<S>& x) {
  MlpTrace<S> trace;
  return mlp_forward(m, x, trace);
}

template <typename S>
VecX<S> mlp_forward(const Mlp<S>& m, const VecX<S>& x) {
  MlpTrace<S> trace;
  return mlp_forward(m, MatX<S>(x), trace).col(0);
}

namespace {

template <typename S>
void backward_core(const Mlp<S>& m, const MlpTrace<S>& trace, MatX<S> delta,
                   MlpGrads<S>& grads);

}  // namespace

template <typename S>
void mlp_backward(const Mlp<S>& m, const MlpTrace<S>& trace, const MatX<S>& d_out,
                  MlpGrads<S>& grads) {
  if (m.output == Mlp<S>::Output::Sigmoid) {
    backward_core(m, trace,
                  MatX<S>(d_out.cwiseProduct(trace.act.back().unaryExpr(
                      [](S y) { return y * (S(1) - y); }))),
                  grads);
  } else {
    backward_core(m, trace, d_out, grads);
  }
}

template <typename S>
void mlp_backward_logits(const Mlp<S>& m, const MlpTrace<S>& trace, const MatX<S>& d_pre,
                         MlpGrads<S>& grads) {
  backward_core(m, trace, d_pre, grads);
}

namespace {

template <typename S>
void backward_core(const Mlp<S>& m, const MlpTrace<S>& trace, MatX<S> delta,
                   MlpGrads<S>& grads) {
  const int layers = m.layer_count();
  grads.d_weights.resize(layers);
  grads.d_biases.resize(layers);
  for (int l = layers - 1; l >= 0; --l) {
    const MatX<S>& below = l == 0 ? trace.input : trace.act[l - 1];
    grads.d_weights[l].noalias() = delta * below.transpose();
    grads.d_biases[l] = delta.rowwise().sum();
    if (l == 0) {
      grads.d_input.noalias() = m.weights[l].transpose() * delta;
    } else {
      MatX<S> d_below = m.weights[l].transpose() * delta;
      // dELU(x) = 1 for x >= 0, exp(x) = ELU(x) + 1 otherwise.
      delta = d_below.cwiseProduct(trace.act[l - 1].binaryExpr(
          trace.pre[l - 1], [](S a, S p) { return p >= S(0) ? S(1) : a + S(1); }));
    }
  }
}

}  // namespace

template <typename S>
MlpGrads<S> mlp_backward(const Mlp<S>& m, const MlpTrace<S>& trace, const MatX<S>& d_out) {
  MlpGrads<S> grads;
  mlp_backward(m, trace, d_out, grads);
  return grads;
}

template <typename S>
void adam_step(AdamState<S>& st, Mlp<S>& m, const MlpGrads<S>& g) {
  const int layers = m.layer_count();
  if (st.m_w.empty()) {
    for (int l = 0; l < layers; ++l) {
      st.m_w.push_back(MatX<S>::Zero(m.weights[l].rows(), m.weights[l].cols()));
      st.v_w.push_back(MatX<S>::Zero(m.weights[l].rows(), m.weights[l].cols()));
      st.m_b.push_back(VecX<S>::Zero(m.biases[l].size()));
      st.v_b.push_back(VecX<S>::Zero(m.biases[l].size()));
    }
  }
  ++st.step_count;
  const S c1 = S(1) - std::pow(st.beta1, static_cast<S>(st.step_count));
  const S c2 = S(1) - std::pow(st.beta2, static_cast<S>(st.step_count));
  auto update = [&](auto& param, auto& mm, auto& vv, const auto& grad) {
    mm = st.beta1 * mm + (S(1) - st.beta1) * grad;
    vv = st.beta2 * vv + (S(1) - st.beta2) * grad.cwiseProduct(grad);
    param.array() -=
        st.lr * (mm.array() / c1) / ((vv.array() / c2).sqrt() + st.eps);
  };
  for (int l = 0; l < layers; ++l) {
    update(m.weights[l], st.m_w[l], st.v_w[l], g.d_weights[l]);
    update(m.biases[l], st.m_b[l], st.v_b[l], g.d_biases[l]);
  }
}

template <typename S>
void sgd_momentum_step(SgdMomentumState<S>& st, Mlp<S>& m, const MlpGrads<S>& g) {
  const int layers = m.layer_count();
  if (st.vel_w.empty()) {
    for (int l = 0; l < layers; ++l) {
      st.vel_w.push_back(MatX<S>::Zero(m.weights[l].rows(), m.weights[l].cols()));
      st.vel_b.push_back(VecX<S>::Zero(m.biases[l].size()));
    }
  }
  for (int l = 0; l < layers; ++l) {
    st.vel_w[l] = st.momentum * st.vel_w[l] + g.d_weights[l];
    st.vel_b[l] = st.momentum * st.vel_b[l] + g.d_biases[l];
    m.weights[l] -= st.lr * st.vel_w[l];
    m.biases[l] -= st.lr * st.vel_b[l];
  }
}

GecoController geco_update(GecoController c, double constraint_value) {
  const double violation = constraint_value - c.kappa;
  if (!c.ema_initialised) {
    c.ema = violation;
    c.ema_initialised = true;
  } else {
    c.ema = c.beta * c.ema + (1.0 - c.beta) * violation;
  }
  c.lambda = std::clamp(c.lambda * std::exp(c.eta * c.ema), c.lambda_min, c.lambda_max);
  return c;
}

// Explicit instantiations: float for training/planning, double for the
// finite-difference oracles.
template struct Mlp<float>;
template struct Mlp<double>;
template const MatX<float>& mlp_forward(const Mlp<float>&, const MatX<float>&, MlpTrace<float>&);
template const MatX<double>& mlp_forward(const Mlp<double>&, const MatX<double>&, MlpTrace<double>&);
template MatX<float> mlp_forward(const Mlp<float>&, const MatX<float>&);
template MatX<double> mlp_forward(const Mlp<double>&, const MatX<double>&);
template VecX<float> mlp_forward(const Mlp<float>&, const VecX<float>&);
template VecX<double> mlp_forward(const Mlp<double>&, const VecX<double>&);
template void mlp_backward(const Mlp<float>&, const MlpTrace<float>&, const MatX<float>&, MlpGrads<float>&);
template void mlp_backward(const Mlp<double>&, const MlpTrace<double>&, const MatX<double>&, MlpGrads<double>&);
template void mlp_backward_logits(const Mlp<float>&, const MlpTrace<float>&, const MatX<float>&, MlpGrads<float>&);
template void mlp_backward_logits(const Mlp<double>&, const MlpTrace<double>&, const MatX<double>&, MlpGrads<double>&);
template MlpGrads<float> mlp_backward(const Mlp<float>&, const MlpTrace<float>&, const MatX<float>&);
template MlpGrads<double> mlp_backward(const Mlp<double>&, const MlpTrace<double>&, const MatX<double>&);
template void adam_step(AdamState<float>&, Mlp<float>&, const MlpGrads<float>&);
template void adam_step(AdamState<double>&, Mlp<double>&, const MlpGrads<double>&);
template void sgd_momentum_step(SgdMomentumState<float>&, Mlp<float>&, const MlpGrads<float>&);
template void sgd_momentum_step(SgdMomentumState<double>&, Mlp<double>&, const MlpGrads<double>&);

}  // namespace ampls
