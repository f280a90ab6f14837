#pragma once

// Training objectives: windowed NCC similarity, diffusion regularization,
// spike-rate regularization, displacement distillation, and soft label Dice.

#include <cmath>

#include "spikewarp/deform.hpp"
#include "spikewarp/ops.hpp"

namespace spikewarp {

struct LossWeights {
  double lambda_sim = 1.0;
  double lambda_reg = 0.1;
  double lambda_spk = 1e-4;
  double beta = 1e-2;
  double rho_star = 0.1;
  double lambda_distill = 0.0;
  double lambda_seg = 0.0;
  std::int64_t ncc_window = 9;
  double ncc_eps = 1e-8;
  double dice_eps = 1e-5;

  void validate() const {
    if (lambda_sim < 0 || lambda_reg < 0 || lambda_spk < 0 || beta < 0 || lambda_distill < 0 ||
        lambda_seg < 0)
      throw std::invalid_argument("loss weights must be non-negative");
    if (ncc_window % 2 == 0) throw std::invalid_argument("ncc window must be odd");
    if (rho_star < 0 || rho_star > 1) throw std::invalid_argument("rho_star must be in [0,1]");
  }
};

namespace ncc_detail {

// Clipped box sum: out(x) = sum of src over the window of radius r around x
// intersected with the volume, computed with a prefix-sum pass per axis.
inline void box_pass(std::vector<double>& buf, std::int64_t outer, std::int64_t dim,
                     std::int64_t inner, std::int64_t r) {
  std::vector<double> prefix(static_cast<std::size_t>(dim + 1));
  std::vector<double> line(static_cast<std::size_t>(dim));
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < inner; ++i) {
      double* base = buf.data() + o * dim * inner + i;
      prefix[0] = 0.0;
      for (std::int64_t t = 0; t < dim; ++t)
        prefix[static_cast<std::size_t>(t + 1)] =
            prefix[static_cast<std::size_t>(t)] + base[t * inner];
      for (std::int64_t t = 0; t < dim; ++t) {
        const std::int64_t lo = std::max<std::int64_t>(0, t - r);
        const std::int64_t hi = std::min<std::int64_t>(dim - 1, t + r);
        line[static_cast<std::size_t>(t)] =
            prefix[static_cast<std::size_t>(hi + 1)] - prefix[static_cast<std::size_t>(lo)];
      }
      for (std::int64_t t = 0; t < dim; ++t) base[t * inner] = line[static_cast<std::size_t>(t)];
    }
}

inline void box_filter(std::vector<double>& buf, std::int64_t D, std::int64_t H, std::int64_t W,
                       std::int64_t r) {
  box_pass(buf, 1, D, H * W, r);
  box_pass(buf, D, H, W, r);
  box_pass(buf, D * H, W, 1, r);
}

template <class T>
std::vector<double> to_double(const Tensor<T>& t) {
  std::vector<double> out(t.data.begin(), t.data.end());
  return out;
}

struct NccForward {
  double loss;  // negative mean NCC
  // Per-voxel coefficients reused by the backward pass.
  std::vector<double> n, fbar, wbar, A, Bf, Bw;
};

// Windowed NCC over clipped windows. For each voxel the window statistics are
//   c = sum (F-Fbar)(W-Wbar), a = sum (F-Fbar)^2, b = sum (W-Wbar)^2
// and NCC = c / (sqrt(a) sqrt(b) + eps). Returns the negated volume mean.
template <class T>
NccForward ncc_forward(const Tensor<T>& fixed, const Tensor<T>& warped, std::int64_t window,
                       double eps) {
  if (!fixed.same_shape(warped)) throw std::invalid_argument("ncc: shape mismatch");
  Dims4 d = Dims4::of(fixed.shape);
  if (d.c != 1) throw std::invalid_argument("ncc: expected single-channel volumes");
  if (window > d.d || window > d.h || window > d.w)
    throw std::invalid_argument("ncc: window larger than volume");
  const std::int64_t r = (window - 1) / 2;
  const std::int64_t N = d.spatial();

  std::vector<double> F = to_double(fixed), W = to_double(warped);
  std::vector<double> n(static_cast<std::size_t>(N), 1.0);
  std::vector<double> sF = F, sW = W;
  std::vector<double> sFF(static_cast<std::size_t>(N)), sWW(static_cast<std::size_t>(N)),
      sFW(static_cast<std::size_t>(N));
  for (std::int64_t i = 0; i < N; ++i) {
    sFF[static_cast<std::size_t>(i)] = F[static_cast<std::size_t>(i)] * F[static_cast<std::size_t>(i)];
    sWW[static_cast<std::size_t>(i)] = W[static_cast<std::size_t>(i)] * W[static_cast<std::size_t>(i)];
    sFW[static_cast<std::size_t>(i)] = F[static_cast<std::size_t>(i)] * W[static_cast<std::size_t>(i)];
  }
  for (auto* v : {&n, &sF, &sW, &sFF, &sWW, &sFW}) box_filter(*v, d.d, d.h, d.w, r);

  NccForward out;
  out.n = n;
  out.fbar.resize(static_cast<std::size_t>(N));
  out.wbar.resize(static_cast<std::size_t>(N));
  out.A.resize(static_cast<std::size_t>(N));
  out.Bf.resize(static_cast<std::size_t>(N));
  out.Bw.resize(static_cast<std::size_t>(N));
  double acc = 0.0;
  for (std::int64_t i = 0; i < N; ++i) {
    const std::size_t s = static_cast<std::size_t>(i);
    const double nn = n[s];
    const double fb = sF[s] / nn, wb = sW[s] / nn;
    const double a = std::max(0.0, sFF[s] - nn * fb * fb);
    const double b = std::max(0.0, sWW[s] - nn * wb * wb);
    const double c = sFW[s] - nn * fb * wb;
    const double den = std::sqrt(a) * std::sqrt(b) + eps;
    acc += c / den;
    out.fbar[s] = fb;
    out.wbar[s] = wb;
    out.A[s] = 1.0 / den;
    out.Bf[s] = a > 0.0 ? c * std::sqrt(b) / (den * den * std::sqrt(a)) : 0.0;
    out.Bw[s] = b > 0.0 ? c * std::sqrt(a) / (den * den * std::sqrt(b)) : 0.0;
  }
  out.loss = -acc / static_cast<double>(N);
  return out;
}

}  // namespace ncc_detail

// Mean windowed NCC (positive orientation, higher is better).
template <class T>
double image_ncc(const Tensor<T>& fixed, const Tensor<T>& warped, std::int64_t window = 9,
                 double eps = 1e-8) {
  return -ncc_detail::ncc_forward(fixed, warped, window, eps).loss;
}

namespace ops {

// Negative mean windowed NCC as a differentiable loss.
//
// Backward: for each voxel y,
//   dL/dW(y) = -(1/N) [ F(y) S(A)(y) - S(A fbar)(y) - W(y) S(Bw)(y) + S(Bw wbar)(y) ]
// where S is the same clipped box filter (window membership is symmetric),
// A = 1/den and Bw = c sqrt(a) / (den^2 sqrt(b)); symmetrically for F.
template <class T>
Id<T> ncc_local(Tape<T>& tape, Id<T> fixed, Id<T> warped, std::int64_t window = 9,
                double eps = 1e-8) {
  auto fw = ncc_detail::ncc_forward(tape.value(fixed), tape.value(warped), window, eps);
  Dims4 d = Dims4::of(tape.value(fixed).shape);
  const std::int64_t r = (window - 1) / 2;
  return tape.push(
      Tensor<T>::scalar(static_cast<T>(fw.loss)), {fixed, warped},
      [fixed, warped, fw, d, r](Tape<T>& t, Id<T> self) {
        const double gscale = static_cast<double>(t.grad(self)[0]);
        const std::int64_t N = d.spatial();
        auto F = ncc_detail::to_double(t.value(fixed));
        auto W = ncc_detail::to_double(t.value(warped));
        std::vector<double> sA = fw.A, sAf(fw.A), sAw(fw.A), sBf = fw.Bf, sBw = fw.Bw,
            sBff(fw.Bf), sBww(fw.Bw);
        for (std::int64_t i = 0; i < N; ++i) {
          const std::size_t s = static_cast<std::size_t>(i);
          sAf[s] *= fw.fbar[s];
          sAw[s] *= fw.wbar[s];
          sBff[s] *= fw.fbar[s];
          sBww[s] *= fw.wbar[s];
        }
        for (auto* v : {&sA, &sAf, &sAw, &sBf, &sBw, &sBff, &sBww})
          ncc_detail::box_filter(*v, d.d, d.h, d.w, r);
        Tensor<T>&gF = t.grad(fixed), &gW = t.grad(warped);
        const double k = -gscale / static_cast<double>(N);
        for (std::int64_t i = 0; i < N; ++i) {
          const std::size_t s = static_cast<std::size_t>(i);
          gW[i] += static_cast<T>(k * (F[s] * sA[s] - sAf[s] - W[s] * sBw[s] + sBww[s]));
          gF[i] += static_cast<T>(k * (W[s] * sA[s] - sAw[s] - F[s] * sBf[s] + sBff[s]));
        }
      },
      "ncc_local");
}

// Mean over valid forward-difference terms of the squared spatial gradient of
// a [3,D,H,W] field (all channels, all axes).
template <class T>
Id<T> diffusion_reg(Tape<T>& tape, Id<T> field) {
  Dims4 f = Dims4::of(tape.value(field).shape);
  if (f.c != 3) throw std::invalid_argument("diffusion_reg: field must be [3,D,H,W]");
  const std::int64_t terms =
      f.c * ((f.d - 1) * f.h * f.w + f.d * (f.h - 1) * f.w + f.d * f.h * (f.w - 1));
  if (terms == 0) throw std::invalid_argument("diffusion_reg: field too small");
  const Tensor<T>& u = tape.value(field);
  double acc = 0.0;
  const std::int64_t strides[3] = {f.h * f.w, f.w, 1};
  const std::int64_t dims[3] = {f.d, f.h, f.w};
  for (std::int64_t c = 0; c < 3; ++c)
    for (int axis = 0; axis < 3; ++axis)
      for (std::int64_t z = 0; z < (axis == 0 ? f.d - 1 : f.d); ++z)
        for (std::int64_t y = 0; y < (axis == 1 ? f.h - 1 : f.h); ++y)
          for (std::int64_t x = 0; x < (axis == 2 ? f.w - 1 : f.w); ++x) {
            const std::int64_t i = f.idx(c, z, y, x);
            const double dd = static_cast<double>(u[i + strides[axis]]) - static_cast<double>(u[i]);
            acc += dd * dd;
          }
  (void)dims;
  const double loss = acc / static_cast<double>(terms);
  return tape.push(Tensor<T>::scalar(static_cast<T>(loss)), {field},
                   [field, f, terms](Tape<T>& t, Id<T> self) {
                     const double g = static_cast<double>(t.grad(self)[0]) /
                                      static_cast<double>(terms);
                     const Tensor<T>& u = t.value(field);
                     Tensor<T>& gu = t.grad(field);
                     const std::int64_t strides[3] = {f.h * f.w, f.w, 1};
                     for (std::int64_t c = 0; c < 3; ++c)
                       for (int axis = 0; axis < 3; ++axis)
                         for (std::int64_t z = 0; z < (axis == 0 ? f.d - 1 : f.d); ++z)
                           for (std::int64_t y = 0; y < (axis == 1 ? f.h - 1 : f.h); ++y)
                             for (std::int64_t x = 0; x < (axis == 2 ? f.w - 1 : f.w); ++x) {
                               const std::int64_t i = f.idx(c, z, y, x);
                               const double dd = static_cast<double>(u[i + strides[axis]]) -
                                                 static_cast<double>(u[i]);
                               gu[i + strides[axis]] += static_cast<T>(2.0 * g * dd);
                               gu[i] -= static_cast<T>(2.0 * g * dd);
                             }
                   },
                   "diffusion_reg");
}

// sum_l rho_l + beta * sum_l (rho_l - rho_star)^2 over per-layer rate scalars.
template <class T>
Id<T> spike_reg(Tape<T>& tape, const std::vector<Id<T>>& rates, double rho_star, double beta) {
  if (rates.empty()) throw std::invalid_argument("spike_reg: no rates");
  Id<T> total = -1;
  for (Id<T> rho : rates) {
    Id<T> dev = square(tape, add_const(tape, rho, -rho_star));
    Id<T> term = add(tape, rho, scale(tape, dev, beta));
    total = (total < 0) ? term : add(tape, total, term);
  }
  return total;
}

// Mean squared deviation from a frozen teacher field; gradient flows only
// into the student.
template <class T>
Id<T> kd_distill(Tape<T>& tape, Id<T> student, const Tensor<T>& teacher) {
  if (!tape.value(student).same_shape(teacher))
    throw std::invalid_argument("kd_distill: shape mismatch");
  const Tensor<T>& s = tape.value(student);
  const std::int64_t N = s.numel();
  double acc = 0.0;
  for (std::int64_t i = 0; i < N; ++i) {
    const double dd = static_cast<double>(s[i]) - static_cast<double>(teacher[i]);
    acc += dd * dd;
  }
  Tensor<T> teach = teacher;
  return tape.push(Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(N))), {student},
                   [student, teach, N](Tape<T>& t, Id<T> self) {
                     const double g =
                         2.0 * static_cast<double>(t.grad(self)[0]) / static_cast<double>(N);
                     const Tensor<T>& s = t.value(student);
                     Tensor<T>& gs = t.grad(student);
                     for (std::int64_t i = 0; i < N; ++i)
                       gs[i] += static_cast<T>(g * (static_cast<double>(s[i]) -
                                                    static_cast<double>(teach[i])));
                   },
                   "kd_distill");
}

// 1 - mean over classes of (2*intersection + eps) / (|A| + |B| + eps) after
// warping each moving one-hot channel trilinearly by the field.
template <class T>
Id<T> soft_dice(Tape<T>& tape, Id<T> fixed_onehot, Id<T> moving_onehot, Id<T> field,
                double eps = 1e-5) {
  Dims4 df = Dims4::of(tape.value(fixed_onehot).shape);
  Dims4 dm = Dims4::of(tape.value(moving_onehot).shape);
  if (df.c != dm.c) throw std::invalid_argument("soft_dice: class count mismatch");
  Id<T> warped = warp_trilinear(tape, moving_onehot, field);
  Id<T> dice_acc = -1;
  for (std::int64_t c = 0; c < df.c; ++c) {
    Id<T> fc = slice_channel(tape, fixed_onehot, c);
    Id<T> wc = slice_channel(tape, warped, c);
    Id<T> inter = sum(tape, mul(tape, fc, wc));
    Id<T> sizes = add(tape, sum(tape, fc), sum(tape, wc));
    Id<T> dice = div(tape, add_const(tape, scale(tape, inter, 2.0), eps),
                     add_const(tape, sizes, eps));
    dice_acc = (dice_acc < 0) ? dice : add(tape, dice_acc, dice);
  }
  Id<T> mean_dice = scale(tape, dice_acc, 1.0 / static_cast<double>(df.c));
  return scale(tape, add_const(tape, mean_dice, -1.0), -1.0);
}

}  // namespace ops

// Weighted total with per-component breakdown for logging. A component id of
// -1 means absent; absent components with nonzero weight are an error.
template <class T>
struct LossBreakdown {
  typename Tape<T>::Id total;
  double sim = 0, reg = 0, spk = 0, distill = 0, seg = 0;
};

template <class T>
LossBreakdown<T> total_loss(Tape<T>& tape, typename Tape<T>::Id sim, typename Tape<T>::Id reg,
                            typename Tape<T>::Id spk, typename Tape<T>::Id distill,
                            typename Tape<T>::Id seg, const LossWeights& w) {
  w.validate();
  using Id = typename Tape<T>::Id;
  auto require = [&](Id id, double weight, const char* name) {
    if (id < 0 && weight != 0.0)
      throw std::invalid_argument(std::string("total_loss: missing component ") + name +
                                  " with nonzero weight");
  };
  require(sim, w.lambda_sim, "sim");
  require(reg, w.lambda_reg, "reg");
  require(spk, w.lambda_spk, "spk");
  require(distill, w.lambda_distill, "distill");
  require(seg, w.lambda_seg, "seg");

  LossBreakdown<T> out;
  Id total = -1;
  auto fold = [&](Id id, double weight, double* slot) {
    if (id < 0) return;
    *slot = static_cast<double>(tape.value(id)[0]);
    if (weight == 0.0) return;
    Id term = ops::scale(tape, id, weight);
    total = (total < 0) ? term : ops::add(tape, total, term);
  };
  fold(sim, w.lambda_sim, &out.sim);
  fold(reg, w.lambda_reg, &out.reg);
  fold(spk, w.lambda_spk, &out.spk);
  fold(distill, w.lambda_distill, &out.distill);
  fold(seg, w.lambda_seg, &out.seg);
  if (total < 0) throw std::invalid_argument("total_loss: no active components");
  out.total = total;
  return out;
}

}  // namespace spikewarp
