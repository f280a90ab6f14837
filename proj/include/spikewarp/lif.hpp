#pragma once

// Leaky integrate-and-fire dynamics.
//
// Membrane update per step: v <- tau * v_prev + I. A spike fires where
// v >= theta (the boundary case fires), then the membrane resets to zero at
// spiking sites via v <- v * (1 - s). The backward pass substitutes the fast
// sigmoid alpha*sig(alpha*(v-theta))*(1-sig(...)) for the Heaviside step, in
// both the spike output and the reset factor.

#include <cmath>

#include "spikewarp/ops.hpp"

namespace spikewarp {

template <class T>
struct LifParams {
  Tensor<T> tau;    // per-channel leak, each in (0, 1]
  Tensor<T> theta;  // per-layer threshold, [1], > 0
  double alpha = 10.0;

  void validate() const {
    for (T t : tau.data)
      if (!(t > T(0) && t <= T(1))) throw std::invalid_argument("lif tau must be in (0,1]");
    if (theta.numel() != 1 || !(theta[0] > T(0)))
      throw std::invalid_argument("lif theta must be a single positive value");
    if (!(alpha > 0)) throw std::invalid_argument("lif alpha must be positive");
  }
};

template <class T>
struct LifState {
  Tensor<T> v;
  std::int64_t t = 0;
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// d(spike)/d(membrane) stand-in used during backpropagation.
inline double surrogate_grad(double v, double theta, double alpha) {
  const double s = sigmoid(alpha * (v - theta));
  return alpha * s * (1.0 - s);
}

// Raw (tape-free) single step. Spikes are exactly {0,1}.
template <class T>
Tensor<T> lif_step(LifState<T>& state, const Tensor<T>& input_current, const LifParams<T>& params) {
  params.validate();
  if (state.v.shape != input_current.shape)
    throw std::invalid_argument("lif_step: input shape does not match membrane");
  Dims4 d = Dims4::of(state.v.shape);
  if (params.tau.shape != Shape{d.c})
    throw std::invalid_argument("lif_step: tau must be per-channel [C]");
  const T theta = params.theta[0];
  Tensor<T> spikes(state.v.shape);
  for (std::int64_t c = 0; c < d.c; ++c) {
    const T tau = params.tau[c];
    for (std::int64_t i = c * d.spatial(); i < (c + 1) * d.spatial(); ++i) {
      T v = tau * state.v[i] + input_current[i];
      const T s = v >= theta ? T(1) : T(0);
      spikes[i] = s;
      state.v[i] = v * (T(1) - s);
    }
  }
  state.v.require_finite("lif membrane");
  ++state.t;
  return spikes;
}

// Tape-recorded spike nonlinearity. v is [C,D,H,W], theta is [1].
//
// relaxed=false: forward is the binary Heaviside (with the v >= theta
// boundary firing); relaxed=true: forward is the sigmoid relaxation itself,
// which makes the whole network a smooth function of its parameters so
// finite-difference checks of the surrogate path are exact. The backward rule
// is the fast-sigmoid surrogate in both modes, for both v and theta.
template <class T>
typename Tape<T>::Id spike_op(Tape<T>& tape, typename Tape<T>::Id v, typename Tape<T>::Id theta,
                              double alpha, bool relaxed) {
  using Id = typename Tape<T>::Id;
  if (tape.value(theta).numel() != 1)
    throw std::invalid_argument("spike_op: theta must be a single value");
  const Tensor<T>& vv = tape.value(v);
  const double th = static_cast<double>(tape.value(theta)[0]);
  Tensor<T> out(vv.shape);
  if (relaxed) {
    for (std::int64_t i = 0; i < vv.numel(); ++i)
      out[i] = static_cast<T>(sigmoid(alpha * (static_cast<double>(vv[i]) - th)));
  } else {
    for (std::int64_t i = 0; i < vv.numel(); ++i)
      out[i] = static_cast<double>(vv[i]) >= th ? T(1) : T(0);
  }
  return tape.push(std::move(out), {v, theta},
                   [v, theta, alpha](Tape<T>& t, Id self) {
                     const Tensor<T>& g = t.grad(self);
                     const Tensor<T>& vv = t.value(v);
                     const double th = static_cast<double>(t.value(theta)[0]);
                     Tensor<T>& gv = t.grad(v);
                     Tensor<T>& gth = t.grad(theta);
                     double th_acc = 0.0;
                     for (std::int64_t i = 0; i < vv.numel(); ++i) {
                       const double sg = surrogate_grad(static_cast<double>(vv[i]), th, alpha);
                       const double gi = static_cast<double>(g[i]) * sg;
                       gv[i] += static_cast<T>(gi);
                       th_acc -= gi;
                     }
                     gth[0] += static_cast<T>(th_acc);
                   },
                   "spike");
}

// Runs T recorded LIF steps with a constant input current and returns the
// rate readout (mean spike tensor). tau and theta are tape leaves so both
// receive gradients.
template <class T>
typename Tape<T>::Id lif_run_rate(Tape<T>& tape, typename Tape<T>::Id current,
                                  typename Tape<T>::Id tau, typename Tape<T>::Id theta,
                                  std::int64_t timesteps, double alpha, bool relaxed) {
  using Id = typename Tape<T>::Id;
  if (timesteps < 1) throw std::invalid_argument("lif_run_rate: need at least one timestep");
  Id v = current;  // v_1 = tau*0 + I
  Id acc = -1;
  for (std::int64_t t = 0; t < timesteps; ++t) {
    if (t > 0) v = ops::add(tape, ops::channel_scale(tape, v, tau), current);
    Id s = spike_op(tape, v, theta, alpha, relaxed);
    acc = (acc < 0) ? s : ops::add(tape, acc, s);
    if (t + 1 < timesteps) {
      Id keep = ops::scale(tape, ops::add_const(tape, s, -1.0), -1.0);  // 1 - s
      v = ops::mul(tape, v, keep);
    }
  }
  return ops::scale(tape, acc, 1.0 / static_cast<double>(timesteps));
}

// Mean spike sequence readout, values in [0,1].
template <class T>
Tensor<T> rate_readout(const std::vector<Tensor<T>>& spike_sequence) {
  if (spike_sequence.empty()) throw std::invalid_argument("rate_readout: empty sequence");
  Tensor<T> out(spike_sequence[0].shape);
  for (const auto& s : spike_sequence) {
    if (!s.same_shape(out)) throw std::invalid_argument("rate_readout: shape mismatch");
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += s[i];
  }
  const T inv = T(1) / static_cast<T>(spike_sequence.size());
  for (auto& v : out.data) v *= inv;
  return out;
}

// U-shaped leak schedule. Encoder taus fall linearly from tau_hi at the
// shallowest level to tau_lo at the deepest; the bottleneck sits at tau_lo;
// decoder taus mirror the encoder back up to tau_hi.
inline std::vector<double> leak_schedule(std::int64_t encoder_levels, std::int64_t decoder_levels,
                                         double tau_hi = 0.90, double tau_lo = 0.75) {
  if (encoder_levels < 1 || decoder_levels < 1)
    throw std::invalid_argument("leak_schedule: need at least one level per side");
  if (tau_hi <= tau_lo) throw std::invalid_argument("leak_schedule: tau_hi must exceed tau_lo");
  auto ramp = [&](std::int64_t levels) {
    std::vector<double> taus(static_cast<std::size_t>(levels));
    for (std::int64_t i = 0; i < levels; ++i)
      taus[static_cast<std::size_t>(i)] =
          levels == 1 ? tau_hi
                      : tau_hi + (tau_lo - tau_hi) * static_cast<double>(i) /
                            static_cast<double>(levels - 1);
    return taus;
  };
  std::vector<double> enc = ramp(encoder_levels), dec = ramp(decoder_levels);
  std::vector<double> out = enc;
  out.push_back(tau_lo);  // bottleneck
  out.insert(out.end(), dec.rbegin(), dec.rend());
  return out;
}

}  // namespace spikewarp
