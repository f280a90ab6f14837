#pragma once

// Analog-to-spiking conversion: teacher activation recording, percentile
// threshold calibration, and layer-wise parameter transfer.

#include <sstream>

#include "spikewarp/unet.hpp"

namespace spikewarp {

// Uniform reservoir of strictly positive activation samples per layer.
class CalibrationSet {
 public:
  explicit CalibrationSet(std::size_t layers, std::size_t cap = 1000000,
                          std::uint64_t seed = 0)
      : reservoirs_(layers), seen_(layers, 0), cap_(cap), rng_(seed) {}

  void add(std::size_t layer, double value) {
    if (!(value > 0.0)) return;  // only strictly positive activations
    auto& res = reservoirs_[layer];
    auto& seen = seen_[layer];
    ++seen;
    if (res.size() < cap_) {
      res.push_back(value);
    } else {
      std::uniform_int_distribution<std::uint64_t> pick(0, seen - 1);
      const std::uint64_t j = pick(rng_);
      if (j < cap_) res[static_cast<std::size_t>(j)] = value;
    }
  }

  std::size_t layers() const { return reservoirs_.size(); }
  const std::vector<double>& samples(std::size_t layer) const { return reservoirs_[layer]; }
  std::uint64_t seen(std::size_t layer) const { return seen_[layer]; }

 private:
  std::vector<std::vector<double>> reservoirs_;
  std::vector<std::uint64_t> seen_;
  std::size_t cap_;
  std::mt19937_64 rng_;
};

// Linear-interpolation (inclusive) percentile of a sample set; continuous in p.
inline double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of empty sample");
  if (p < 0.0 || p > 100.0) throw std::invalid_argument("percentile out of range");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - std::floor(pos);
  return values[lo] + frac * (values[hi] - values[lo]);
}

// Runs the frozen teacher over the calibration pairs and collects post-ReLU
// activations at every future spiking site.
template <class T>
CalibrationSet record_activations(Network<T>& teacher,
                                  const std::vector<std::pair<Tensor<T>, Tensor<T>>>& pairs,
                                  std::size_t cap = 1000000, std::uint64_t seed = 0) {
  if (teacher.flavor != Flavor::ann)
    throw std::invalid_argument("record_activations: teacher must be the analog flavor");
  if (pairs.empty()) throw std::invalid_argument("record_activations: empty pair list");
  CalibrationSet cal(teacher.blocks.size(), cap, seed);
  const bool was_training = teacher.bn_training;
  teacher.bn_training = false;
  ForwardOptions<T> opt;
  opt.activation_hook = [&cal](std::size_t layer, const Tensor<T>& a) {
    for (T v : a.data) cal.add(layer, static_cast<double>(v));
  };
  for (const auto& [fixed, moving] : pairs) {
    Tape<T> tape;
    forward(teacher, tape, fixed, moving, opt);
  }
  teacher.bn_training = was_training;
  return cal;
}

// Per-layer thresholds at the p-th percentile of the positive activations.
inline std::vector<double> calibrate_thresholds(const CalibrationSet& cal, double p) {
  std::vector<double> thetas;
  for (std::size_t l = 0; l < cal.layers(); ++l) {
    if (cal.samples(l).empty())
      throw std::runtime_error("calibrate_thresholds: layer " + std::to_string(l) +
                               " has no positive activations (silent teacher layer)");
    thetas.push_back(percentile(cal.samples(l), p));
  }
  return thetas;
}

inline std::string calibration_report(const CalibrationSet& cal, const std::vector<double>& thetas) {
  std::ostringstream os;
  os << "layer,samples,min,median,max,theta\n";
  for (std::size_t l = 0; l < cal.layers(); ++l) {
    auto v = cal.samples(l);
    std::sort(v.begin(), v.end());
    os << l << "," << cal.seen(l) << "," << (v.empty() ? 0.0 : v.front()) << ","
       << (v.empty() ? 0.0 : percentile(v, 50.0)) << "," << (v.empty() ? 0.0 : v.back()) << ","
       << thetas[l] << "\n";
  }
  return os.str();
}

// Builds the spiking student: conv weights, biases, and batch-norm tensors
// copied bitwise from the teacher; batch norm frozen; thresholds from the
// calibration; leaks from the schedule (set by build_network).
template <class T>
Network<T> transfer_weights(const Network<T>& teacher, const std::vector<double>& thetas,
                            std::int64_t timesteps) {
  if (teacher.flavor != Flavor::ann)
    throw std::invalid_argument("transfer_weights: teacher must be the analog flavor");
  if (thetas.size() != teacher.blocks.size())
    throw std::invalid_argument("transfer_weights: threshold count mismatch");
  NetworkSpec spec = teacher.spec;
  spec.timesteps = timesteps;
  std::mt19937_64 rng(0);
  Network<T> student = build_network<T>(spec, Flavor::snn, rng);
  for (std::size_t i = 0; i < teacher.blocks.size(); ++i) {
    const auto& src = teacher.blocks[i];
    auto& dst = student.blocks[i];
    if (src.w.shape != dst.w.shape)
      throw std::invalid_argument("transfer_weights: layer shape mismatch at " + std::to_string(i));
    dst.w = src.w;
    dst.b = src.b;
    dst.gamma = src.gamma;
    dst.beta = src.beta;
    dst.bn = src.bn;
    dst.theta[0] = static_cast<T>(thetas[i]);
  }
  student.head_w = teacher.head_w;
  student.head_b = teacher.head_b;
  student.bn_frozen = true;
  student.bn_training = false;
  return student;
}

}  // namespace spikewarp
