#pragma once

// The shared U-Net macro-architecture in two flavors: an analog (ReLU)
// teacher and a spiking student built on the same layer graph.
//
// Layer inventory for L encoder levels:
//   enc0        stem conv, stride 1, full resolution
//   enc1..L-1   stride-2 convs, halving resolution each level
//   bott0,bott1 two stride-1 convs at the deepest resolution
//   dec0..L-2   nearest x2 upsample, concat the matching encoder skip, conv
//   decL-1      full-resolution conv over the concat with the stem output
//   head        1x1x1 conv to 3 channels (+ depthwise smoothing, snn only)
// Every conv except the head is followed by batch norm and the flavor's
// nonlinearity (ReLU or T LIF steps with a rate readout). Skips carry rates.

#include <string>

#include "spikewarp/deform.hpp"
#include "spikewarp/lif.hpp"
#include "spikewarp/losses.hpp"

namespace spikewarp {

enum class Flavor { ann, snn };

struct NetworkSpec {
  std::vector<std::int64_t> encoder_channels{16, 32, 64, 128};
  std::vector<std::int64_t> decoder_channels{64, 32, 16, 16};
  std::int64_t input_channels = 2;
  std::int64_t output_channels = 3;
  std::int64_t kernel = 3;
  std::int64_t timesteps = 4;
  std::int64_t smoothing_kernel = 3;  // 0 disables the head smoothing conv
  bool velocity_mode = false;         // integrate the head output as an SVF
  int svf_squarings = 7;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  double surrogate_alpha = 10.0;
  double tau_hi = 0.90, tau_lo = 0.75;

  std::int64_t levels() const { return static_cast<std::int64_t>(encoder_channels.size()); }

  void validate() const {
    if (encoder_channels.empty() || encoder_channels.size() != decoder_channels.size())
      throw std::invalid_argument("encoder and decoder level counts must match and be nonzero");
    for (auto c : encoder_channels)
      if (c < 1) throw std::invalid_argument("invalid encoder channels");
    for (auto c : decoder_channels)
      if (c < 1) throw std::invalid_argument("invalid decoder channels");
    if (output_channels != 3) throw std::invalid_argument("output_channels must be 3");
    if (kernel % 2 == 0) throw std::invalid_argument("kernel must be odd");
    if (timesteps < 1) throw std::invalid_argument("timesteps must be >= 1");
    if (smoothing_kernel != 0 && smoothing_kernel % 2 == 0)
      throw std::invalid_argument("smoothing kernel must be odd (or 0 to disable)");
  }
};

struct LayerDef {
  std::string name;
  std::int64_t cin, cout;
  std::int64_t stride;   // 1 or 2
  bool upsample;         // nearest x2 before the conv
  int skip;              // encoder block index concatenated before the conv, or -1
  std::int64_t level;    // output resolution divisor is 2^level
};

inline std::vector<LayerDef> layer_inventory(const NetworkSpec& spec) {
  spec.validate();
  const std::int64_t L = spec.levels();
  const auto& E = spec.encoder_channels;
  const auto& D = spec.decoder_channels;
  std::vector<LayerDef> out;
  out.push_back({"enc0", spec.input_channels, E[0], 1, false, -1, 0});
  for (std::int64_t i = 1; i < L; ++i)
    out.push_back({"enc" + std::to_string(i), E[static_cast<std::size_t>(i - 1)],
                   E[static_cast<std::size_t>(i)], 2, false, -1, i});
  out.push_back({"bott0", E.back(), E.back(), 1, false, -1, L - 1});
  out.push_back({"bott1", E.back(), E.back(), 1, false, -1, L - 1});
  for (std::int64_t j = 0; j < L; ++j) {
    const bool up = j < L - 1;
    const int skip = up ? static_cast<int>(L - 2 - j) : 0;
    const std::int64_t prev = j == 0 ? E.back() : D[static_cast<std::size_t>(j - 1)];
    const std::int64_t cin = prev + E[static_cast<std::size_t>(skip)];
    const std::int64_t level = up ? L - 2 - j : 0;
    out.push_back({"dec" + std::to_string(j), cin, D[static_cast<std::size_t>(j)], 1, up, skip,
                   level});
  }
  return out;
}

// Symbolic counts: no tensors are allocated.

inline std::int64_t conv_param_count(const NetworkSpec& spec, Flavor flavor) {
  const auto inv = layer_inventory(spec);
  const std::int64_t k3 = spec.kernel * spec.kernel * spec.kernel;
  std::int64_t n = 0;
  for (const auto& l : inv) n += l.cout * l.cin * k3 + l.cout + 2 * l.cout;  // conv w+b, BN affine
  n += spec.output_channels * spec.decoder_channels.back() + spec.output_channels;  // head 1x1x1
  if (flavor == Flavor::snn) {
    for (const auto& l : inv) n += l.cout + 1;  // per-channel tau, per-layer theta
    if (spec.smoothing_kernel > 0)
      n += spec.output_channels * spec.smoothing_kernel * spec.smoothing_kernel *
           spec.smoothing_kernel;
  }
  return n;
}

struct MacCount {
  std::vector<std::pair<std::string, std::int64_t>> per_layer;
  std::int64_t total = 0;
};

// Dense multiply-accumulate count per pair at the given input spatial shape.
inline MacCount count_macs(const NetworkSpec& spec, std::int64_t D, std::int64_t H,
                           std::int64_t W) {
  const auto inv = layer_inventory(spec);
  const std::int64_t k3 = spec.kernel * spec.kernel * spec.kernel;
  MacCount out;
  for (const auto& l : inv) {
    const std::int64_t div = std::int64_t(1) << l.level;
    const std::int64_t vox = (D / div) * (H / div) * (W / div);
    const std::int64_t macs = l.cout * l.cin * k3 * vox;
    out.per_layer.emplace_back(l.name, macs);
    out.total += macs;
  }
  const std::int64_t head = spec.output_channels * spec.decoder_channels.back() * D * H * W;
  out.per_layer.emplace_back("head", head);
  out.total += head;
  return out;
}

// Accumulate-operation fan-in per spiking layer: the total per-spike cost at
// its consumers, Cout*k^3 summed over every conv reading that layer's output
// (including skip-connection consumers). The final decoder feeds the 1x1x1
// head at fan-in output_channels.
inline std::vector<std::int64_t> spike_fanins(const NetworkSpec& spec) {
  const auto inv = layer_inventory(spec);
  const std::int64_t k3 = spec.kernel * spec.kernel * spec.kernel;
  const std::int64_t L = spec.levels();
  std::vector<std::int64_t> fan(inv.size(), 0);
  // sequential consumer
  for (std::size_t i = 0; i + 1 < inv.size(); ++i) fan[i] += inv[i + 1].cout * k3;
  fan.back() += spec.output_channels;  // head 1x1x1
  // skip consumers read encoder outputs
  for (std::size_t i = 0; i < inv.size(); ++i)
    if (inv[i].skip >= 0) fan[static_cast<std::size_t>(inv[i].skip)] += inv[i].cout * k3;
  return fan;
}

template <class T>
struct ConvBlock {
  Tensor<T> w, b;
  Tensor<T> gamma, beta;
  ops::BnStats<T> bn;
  Tensor<T> tau;    // [Cout], snn only
  Tensor<T> theta;  // [1], snn only
};

template <class T>
struct Network {
  NetworkSpec spec;
  Flavor flavor = Flavor::ann;
  std::vector<ConvBlock<T>> blocks;  // layer_inventory order
  Tensor<T> head_w, head_b;          // [3, Cdec, 1,1,1], [3]
  Tensor<T> smooth_w;                // [3, k,k,k], snn only (empty when disabled)
  bool bn_frozen = false;
  bool bn_training = false;  // update running stats during forward
};

template <class T>
Network<T> build_network(const NetworkSpec& spec, Flavor flavor, std::mt19937_64& rng) {
  spec.validate();
  Network<T> net;
  net.spec = spec;
  net.flavor = flavor;
  const auto inv = layer_inventory(spec);
  const std::int64_t k = spec.kernel;
  const std::int64_t L = spec.levels();
  std::vector<double> taus = leak_schedule(L, L, spec.tau_hi, spec.tau_lo);
  // leak_schedule lists encoder ramp, one bottleneck entry, decoder ramp; the
  // inventory has two bottleneck convs, both at the deepest leak.
  std::vector<double> site_taus(taus.begin(), taus.begin() + L);
  site_taus.push_back(spec.tau_lo);
  site_taus.push_back(spec.tau_lo);
  site_taus.insert(site_taus.end(), taus.begin() + L + 1, taus.end());

  for (std::size_t i = 0; i < inv.size(); ++i) {
    const auto& l = inv[i];
    ConvBlock<T> blk;
    const double stddev = std::sqrt(2.0 / static_cast<double>(l.cin * k * k * k));
    blk.w = random_normal<T>(Shape{l.cout, l.cin, k, k, k}, stddev, rng);
    blk.b = Tensor<T>(Shape{l.cout});
    blk.gamma = Tensor<T>(Shape{l.cout}, T(1));
    blk.beta = Tensor<T>(Shape{l.cout});
    blk.bn.mean = Tensor<T>(Shape{l.cout});
    blk.bn.var = Tensor<T>(Shape{l.cout}, T(1));
    if (flavor == Flavor::snn) {
      blk.tau = Tensor<T>(Shape{l.cout}, static_cast<T>(site_taus[i]));
      blk.theta = Tensor<T>(Shape{1}, T(1));
    }
    net.blocks.push_back(std::move(blk));
  }
  net.head_w = random_normal<T>(Shape{spec.output_channels, spec.decoder_channels.back(), 1, 1, 1},
                                1e-3, rng);
  net.head_b = Tensor<T>(Shape{spec.output_channels});
  if (flavor == Flavor::snn && spec.smoothing_kernel > 0) {
    const std::int64_t sk = spec.smoothing_kernel;
    net.smooth_w = Tensor<T>(Shape{spec.output_channels, sk, sk, sk},
                             static_cast<T>(1.0 / static_cast<double>(sk * sk * sk)));
  }
  return net;
}

// Named references to every tensor in a network, in a fixed documented order
// (used by the checkpoint container and the optimizer).
template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T>* t;
};

template <class T>
std::vector<NamedTensor<T>> network_tensors(Network<T>& net) {
  const auto inv = layer_inventory(net.spec);
  std::vector<NamedTensor<T>> out;
  for (std::size_t i = 0; i < inv.size(); ++i) {
    const std::string& n = inv[i].name;
    auto& blk = net.blocks[i];
    out.push_back({n + ".w", &blk.w});
    out.push_back({n + ".b", &blk.b});
    out.push_back({n + ".gamma", &blk.gamma});
    out.push_back({n + ".beta", &blk.beta});
    out.push_back({n + ".bn_mean", &blk.bn.mean});
    out.push_back({n + ".bn_var", &blk.bn.var});
    if (net.flavor == Flavor::snn) {
      out.push_back({n + ".tau", &blk.tau});
      out.push_back({n + ".theta", &blk.theta});
    }
  }
  out.push_back({"head.w", &net.head_w});
  out.push_back({"head.b", &net.head_b});
  if (net.flavor == Flavor::snn && net.spec.smoothing_kernel > 0)
    out.push_back({"head.smooth", &net.smooth_w});
  return out;
}

template <class T>
struct ParamBinding {
  std::string name;
  Tensor<T>* storage;
  typename Tape<T>::Id id;
};

template <class T>
struct ForwardResult {
  typename Tape<T>::Id field;           // displacement field on the tape
  typename Tape<T>::Id raw_head;        // head output before svf integration
  std::vector<ParamBinding<T>> params;  // leaf bindings for the optimizer
  // per LIF site, inventory order (snn only):
  std::vector<typename Tape<T>::Id> rate_ids;  // scalar mean rates on the tape
  std::vector<double> rates;
  std::vector<double> spike_counts;
  std::vector<std::int64_t> neuron_counts;
};

template <class T>
struct ForwardOptions {
  bool relaxed_spikes = false;
  // called with (layer index, post-nonlinearity activation) for every block;
  // used by threshold calibration on the analog flavor
  std::function<void(std::size_t, const Tensor<T>&)> activation_hook;
};

template <class T>
ForwardResult<T> forward(Network<T>& net, Tape<T>& tape, const Tensor<T>& fixed,
                         const Tensor<T>& moving, const ForwardOptions<T>& opt = {}) {
  using Id = typename Tape<T>::Id;
  if (!fixed.same_shape(moving)) throw std::invalid_argument("forward: volume shapes differ");
  Dims4 dv = Dims4::of(fixed.shape);
  const std::int64_t div = std::int64_t(1) << (net.spec.levels() - 1);
  if (dv.d % div || dv.h % div || dv.w % div)
    throw std::invalid_argument("forward: spatial dims must be divisible by " +
                                std::to_string(div));

  ForwardResult<T> res;
  auto bind = [&](const std::string& name, Tensor<T>& t) {
    Id id = tape.leaf(t);
    res.params.push_back({name, &t, id});
    return id;
  };

  const auto inv = layer_inventory(net.spec);
  Id fixed_id = tape.leaf(fixed);
  Id moving_id = tape.leaf(moving);
  Id cur = ops::concat_channels(tape, fixed_id, moving_id);
  std::vector<Id> skips(static_cast<std::size_t>(net.spec.levels()), -1);

  const std::int64_t pad = (net.spec.kernel - 1) / 2;
  for (std::size_t i = 0; i < inv.size(); ++i) {
    const auto& l = inv[i];
    auto& blk = net.blocks[i];
    if (l.upsample) cur = ops::upsample_nearest2x(tape, cur);
    if (l.skip >= 0) cur = ops::concat_channels(tape, cur, skips[static_cast<std::size_t>(l.skip)]);
    Id w = bind(l.name + ".w", blk.w);
    Id b = bind(l.name + ".b", blk.b);
    Id gamma = bind(l.name + ".gamma", blk.gamma);
    Id beta = bind(l.name + ".beta", blk.beta);
    cur = ops::conv3d(tape, cur, w, b, l.stride, pad);
    cur = ops::batchnorm3d(tape, cur, gamma, beta, blk.bn, !net.bn_training || net.bn_frozen,
                           net.spec.bn_momentum, net.spec.bn_eps);
    if (net.flavor == Flavor::ann) {
      cur = ops::relu(tape, cur);
    } else {
      Id tau = bind(l.name + ".tau", blk.tau);
      Id theta = bind(l.name + ".theta", blk.theta);
      cur = lif_run_rate(tape, cur, tau, theta, net.spec.timesteps, net.spec.surrogate_alpha,
                         opt.relaxed_spikes);
      Id rho = ops::mean(tape, cur);
      res.rate_ids.push_back(rho);
      const double rate = static_cast<double>(tape.value(rho)[0]);
      const std::int64_t n = tape.value(cur).numel();
      res.rates.push_back(rate);
      res.neuron_counts.push_back(n);
      res.spike_counts.push_back(rate * static_cast<double>(net.spec.timesteps) *
                                 static_cast<double>(n));
    }
    if (opt.activation_hook) opt.activation_hook(i, tape.value(cur));
    if (l.name[0] == 'e') skips[static_cast<std::size_t>(l.level)] = cur;
  }

  Id hw = bind("head.w", net.head_w);
  Id hb = bind("head.b", net.head_b);
  Id field = ops::conv3d(tape, cur, hw, hb, 1, 0);
  if (net.flavor == Flavor::snn && net.spec.smoothing_kernel > 0) {
    Id sw = bind("head.smooth", net.smooth_w);
    field = ops::depthwise_conv3d(tape, field, sw);
  }
  res.raw_head = field;
  res.field = net.spec.velocity_mode ? ops::svf_integrate(tape, field, net.spec.svf_squarings)
                                     : field;
  return res;
}

}  // namespace spikewarp
