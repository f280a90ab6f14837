#pragma once

// Tape-registered tensor operations. Every op validates shapes, records an
// exact backward rule, and rejects non-finite outputs.

#include <cmath>
#include <memory>

#include "spikewarp/conv3d.hpp"
#include "spikewarp/tape.hpp"

namespace spikewarp::ops {

template <class T>
using Id = typename Tape<T>::Id;

namespace detail {

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
}

}  // namespace detail

template <class T>
Id<T> add(Tape<T>& tape, Id<T> a, Id<T> b) {
  detail::check_same_shape(tape.value(a), tape.value(b), "add");
  Tensor<T> out = tape.value(a);
  detail::accumulate(out, tape.value(b));
  return tape.push(std::move(out), {a, b},
                   [a, b](Tape<T>& t, Id<T> self) {
                     detail::accumulate(t.grad(a), t.grad(self));
                     detail::accumulate(t.grad(b), t.grad(self));
                   },
                   "add");
}

template <class T>
Id<T> sub(Tape<T>& tape, Id<T> a, Id<T> b) {
  detail::check_same_shape(tape.value(a), tape.value(b), "sub");
  Tensor<T> out = tape.value(a);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= tape.value(b)[i];
  return tape.push(std::move(out), {a, b},
                   [a, b](Tape<T>& t, Id<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     detail::accumulate(t.grad(a), g);
                     Tensor<T>& gb = t.grad(b);
                     for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
                   },
                   "sub");
}

template <class T>
Id<T> mul(Tape<T>& tape, Id<T> a, Id<T> b) {
  detail::check_same_shape(tape.value(a), tape.value(b), "mul");
  Tensor<T> out = tape.value(a);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= tape.value(b)[i];
  return tape.push(std::move(out), {a, b},
                   [a, b](Tape<T>& t, Id<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     const Tensor<T>&va = t.value(a), &vb = t.value(b);
                     Tensor<T>&ga = t.grad(a), &gb = t.grad(b);
                     for (std::int64_t i = 0; i < g.numel(); ++i) {
                       ga[i] += g[i] * vb[i];
                       gb[i] += g[i] * va[i];
                     }
                   },
                   "mul");
}

template <class T>
Id<T> div(Tape<T>& tape, Id<T> a, Id<T> b) {
  detail::check_same_shape(tape.value(a), tape.value(b), "div");
  Tensor<T> out = tape.value(a);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] /= tape.value(b)[i];
  return tape.push(std::move(out), {a, b},
                   [a, b](Tape<T>& t, Id<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     const Tensor<T>&va = t.value(a), &vb = t.value(b);
                     Tensor<T>&ga = t.grad(a), &gb = t.grad(b);
                     for (std::int64_t i = 0; i < g.numel(); ++i) {
                       ga[i] += g[i] / vb[i];
                       gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
                     }
                   },
                   "div");
}

template <class T>
Id<T> scale(Tape<T>& tape, Id<T> a, double c) {
  Tensor<T> out = tape.value(a);
  for (auto& v : out.data) v = static_cast<T>(v * c);
  return tape.push(std::move(out), {a},
                   [a, c](Tape<T>& t, Id<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     Tensor<T>& ga = t.grad(a);
                     for (std::int64_t i = 0; i < g.numel(); ++i)
                       ga[i] += static_cast<T>(g[i] * c);
                   },
                   "scale");
}

template <class T>
Id<T> add_const(Tape<T>& tape, Id<T> a, double c) {
  Tensor<T> out = tape.value(a);
  for (auto& v : out.data) v = static_cast<T>(v + c);
  return tape.push(std::move(out), {a},
                   [a](Tape<T>& t, Id<T> self) { detail::accumulate(t.grad(a), t.grad(self)); },
                   "add_const");
}

template <class T>
Id<T> relu(Tape<T>& tape, Id<T> a) {
  Tensor<T> out = tape.value(a);
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  return tape.push(std::move(out), {a},
                   [a](Tape<T>& t, Id<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     const Tensor<T>& va = t.value(a);
                     Tensor<T>& ga = t.grad(a);
                     for (std::int64_t i = 0; i < g.numel(); ++i)
                       if (va[i] > T(0)) ga[i] += g[i];
                   },
                   "relu");
}

template <class T>
Id<T> square(Tape<T>& tape, Id<T> a) {
  Tensor<T> out = tape.value(a);
  for (auto& v : out.data) v *= v;
  return tape.push(std::move(out), {a},
                   [a](Tape<T>& t, Id<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     const Tensor<T>& va = t.value(a);
                     Tensor<T>& ga = t.grad(a);
                     for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += T(2) * g[i] * va[i];
                   },
                   "square");
}

template <class T>
Id<T> sqrt_(Tape<T>& tape, Id<T> a) {
  Tensor<T> out = tape.value(a);
  for (auto& v : out.data) v = static_cast<T>(std::sqrt(static_cast<double>(v)));
  Tensor<T> saved = out;
  return tape.push(std::move(out), {a},
                   [a, saved](Tape<T>& t, Id<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     Tensor<T>& ga = t.grad(a);
                     for (std::int64_t i = 0; i < g.numel(); ++i)
                       ga[i] += g[i] / (T(2) * saved[i]);
                   },
                   "sqrt");
}

template <class T>
Id<T> sum(Tape<T>& tape, Id<T> a) {
  if (tape.value(a).numel() == 0) throw std::invalid_argument("sum over empty tensor");
  Tensor<T> out = Tensor<T>::scalar(tape.value(a).sum());
  return tape.push(std::move(out), {a},
                   [a](Tape<T>& t, Id<T> self) {
                     const T g = t.grad(self)[0];
                     Tensor<T>& ga = t.grad(a);
                     for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
                   },
                   "sum");
}

template <class T>
Id<T> mean(Tape<T>& tape, Id<T> a) {
  const std::int64_t n = tape.value(a).numel();
  if (n == 0) throw std::invalid_argument("mean over empty tensor");
  return scale(tape, sum(tape, a), 1.0 / static_cast<double>(n));
}

// Per-channel multiply: x is [C,D,H,W], factor is [C].
template <class T>
Id<T> channel_scale(Tape<T>& tape, Id<T> x, Id<T> factor) {
  Dims4 d = Dims4::of(tape.value(x).shape);
  if (tape.value(factor).shape != Shape{d.c})
    throw std::invalid_argument("channel_scale: factor must be [C]");
  Tensor<T> out = tape.value(x);
  for (std::int64_t c = 0; c < d.c; ++c) {
    const T f = tape.value(factor)[c];
    T* row = out.data.data() + c * d.spatial();
    for (std::int64_t i = 0; i < d.spatial(); ++i) row[i] *= f;
  }
  return tape.push(std::move(out), {x, factor},
                   [x, factor, d](Tape<T>& t, Id<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     const Tensor<T>&vx = t.value(x), &vf = t.value(factor);
                     Tensor<T>&gx = t.grad(x), &gf = t.grad(factor);
                     for (std::int64_t c = 0; c < d.c; ++c) {
                       double acc = 0.0;
                       const std::int64_t base = c * d.spatial();
                       for (std::int64_t i = 0; i < d.spatial(); ++i) {
                         gx[base + i] += g[base + i] * vf[c];
                         acc += static_cast<double>(g[base + i]) * static_cast<double>(vx[base + i]);
                       }
                       gf[c] += static_cast<T>(acc);
                     }
                   },
                   "channel_scale");
}

template <class T>
Id<T> concat_channels(Tape<T>& tape, Id<T> a, Id<T> b) {
  Dims4 da = Dims4::of(tape.value(a).shape), db = Dims4::of(tape.value(b).shape);
  if (da.d != db.d || da.h != db.h || da.w != db.w)
    throw std::invalid_argument("concat_channels: spatial shape mismatch");
  Tensor<T> out(Shape{da.c + db.c, da.d, da.h, da.w});
  std::copy(tape.value(a).data.begin(), tape.value(a).data.end(), out.data.begin());
  std::copy(tape.value(b).data.begin(), tape.value(b).data.end(),
            out.data.begin() + tape.value(a).data.size());
  const std::int64_t na = tape.value(a).numel();
  return tape.push(std::move(out), {a, b},
                   [a, b, na](Tape<T>& t, Id<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     Tensor<T>&ga = t.grad(a), &gb = t.grad(b);
                     for (std::int64_t i = 0; i < na; ++i) ga[i] += g[i];
                     for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] += g[na + i];
                   },
                   "concat_channels");
}

// View of channel c of a [C,D,H,W] tensor as [1,D,H,W].
template <class T>
Id<T> slice_channel(Tape<T>& tape, Id<T> x, std::int64_t c) {
  Dims4 d = Dims4::of(tape.value(x).shape);
  if (c < 0 || c >= d.c) throw std::invalid_argument("slice_channel: channel out of range");
  Tensor<T> out(Shape{1, d.d, d.h, d.w});
  std::copy_n(tape.value(x).data.begin() + c * d.spatial(), d.spatial(), out.data.begin());
  return tape.push(std::move(out), {x},
                   [x, c, d](Tape<T>& t, Id<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     Tensor<T>& gx = t.grad(x);
                     for (std::int64_t i = 0; i < d.spatial(); ++i) gx[c * d.spatial() + i] += g[i];
                   },
                   "slice_channel");
}

template <class T>
Id<T> upsample_nearest2x(Tape<T>& tape, Id<T> x) {
  Dims4 d = Dims4::of(tape.value(x).shape);
  Tensor<T> out(Shape{d.c, d.d * 2, d.h * 2, d.w * 2});
  Dims4 o = Dims4::of(out.shape);
  const Tensor<T>& in = tape.value(x);
  for (std::int64_t c = 0; c < d.c; ++c)
    for (std::int64_t z = 0; z < o.d; ++z)
      for (std::int64_t y = 0; y < o.h; ++y)
        for (std::int64_t xx = 0; xx < o.w; ++xx)
          out[o.idx(c, z, y, xx)] = in[d.idx(c, z / 2, y / 2, xx / 2)];
  return tape.push(std::move(out), {x},
                   [x, d, o](Tape<T>& t, Id<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     Tensor<T>& gx = t.grad(x);
                     for (std::int64_t c = 0; c < d.c; ++c)
                       for (std::int64_t z = 0; z < o.d; ++z)
                         for (std::int64_t y = 0; y < o.h; ++y)
                           for (std::int64_t xx = 0; xx < o.w; ++xx)
                             gx[d.idx(c, z / 2, y / 2, xx / 2)] += g[o.idx(c, z, y, xx)];
                   },
                   "upsample_nearest2x");
}

template <class T>
Id<T> conv3d(Tape<T>& tape, Id<T> input, Id<T> weight, Id<T> bias, std::int64_t stride,
             std::int64_t pad) {
  ConvGeom geom{tape.value(weight).shape[2], stride, pad};
  Tensor<T> out = conv3d_forward(tape.value(input), tape.value(weight), tape.value(bias), geom);
  Shape in_shape = tape.value(input).shape, w_shape = tape.value(weight).shape;
  return tape.push(std::move(out), {input, weight, bias},
                   [input, weight, bias, geom, in_shape, w_shape](Tape<T>& t, Id<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     detail::accumulate(t.grad(input),
                                        conv3d_backward_input(g, t.value(weight), in_shape, geom));
                     detail::accumulate(t.grad(weight),
                                        conv3d_backward_weight(g, t.value(input), w_shape, geom));
                     detail::accumulate(t.grad(bias), conv3d_backward_bias(g));
                   },
                   "conv3d");
}

// Depthwise 3D convolution (one k^3 kernel per channel), same padding.
// weight is [C,k,k,k]. Used by the displacement-head smoothing kernel.
template <class T>
Id<T> depthwise_conv3d(Tape<T>& tape, Id<T> input, Id<T> weight) {
  Dims4 d = Dims4::of(tape.value(input).shape);
  const Shape& ws = tape.value(weight).shape;
  if (ws.size() != 4 || ws[0] != d.c || ws[1] != ws[2] || ws[2] != ws[3] || ws[1] % 2 == 0)
    throw std::invalid_argument("depthwise_conv3d: weight must be [C,k,k,k] with odd k");
  const std::int64_t k = ws[1];
  ConvGeom geom{k, 1, (k - 1) / 2};
  Tensor<T> out(tape.value(input).shape);
  const Tensor<T> empty_bias;
  for (std::int64_t c = 0; c < d.c; ++c) {
    Tensor<T> slice(Shape{1, d.d, d.h, d.w});
    std::copy_n(tape.value(input).data.begin() + c * d.spatial(), d.spatial(), slice.data.begin());
    Tensor<T> wk(Shape{1, 1, k, k, k});
    std::copy_n(tape.value(weight).data.begin() + c * k * k * k, k * k * k, wk.data.begin());
    Tensor<T> res = conv3d_forward(slice, wk, empty_bias, geom);
    std::copy(res.data.begin(), res.data.end(), out.data.begin() + c * d.spatial());
  }
  return tape.push(std::move(out), {input, weight},
                   [input, weight, d, k, geom](Tape<T>& t, Id<T> self) {
                     const Tensor<T>& g = t.grad(self);
                     Tensor<T>&gi = t.grad(input), &gw = t.grad(weight);
                     for (std::int64_t c = 0; c < d.c; ++c) {
                       Tensor<T> gslice(Shape{1, d.d, d.h, d.w});
                       std::copy_n(g.data.begin() + c * d.spatial(), d.spatial(), gslice.data.begin());
                       Tensor<T> islice(Shape{1, d.d, d.h, d.w});
                       std::copy_n(t.value(input).data.begin() + c * d.spatial(), d.spatial(),
                                   islice.data.begin());
                       Tensor<T> wk(Shape{1, 1, k, k, k});
                       std::copy_n(t.value(weight).data.begin() + c * k * k * k, k * k * k,
                                   wk.data.begin());
                       Tensor<T> gin = conv3d_backward_input(gslice, wk, islice.shape, geom);
                       for (std::int64_t i = 0; i < d.spatial(); ++i)
                         gi[c * d.spatial() + i] += gin[i];
                       Tensor<T> gwk =
                           conv3d_backward_weight(gslice, islice, Shape{1, 1, k, k, k}, geom);
                       for (std::int64_t i = 0; i < k * k * k; ++i)
                         gw[c * k * k * k + i] += gwk[i];
                     }
                   },
                   "depthwise_conv3d");
}

// Batch normalization over the spatial dims of a [C,D,H,W] tensor.
//
// frozen: normalize with the stored running statistics only; gradients for
// gamma/beta are suppressed and running stats are left untouched.
// training: normalize with batch statistics (biased variance), update the
// running stats in place with the given momentum, and backpropagate through
// the batch statistics.
template <class T>
struct BnStats {
  Tensor<T> mean, var;  // running statistics, [C] each
};

template <class T>
Id<T> batchnorm3d(Tape<T>& tape, Id<T> x, Id<T> gamma, Id<T> beta, BnStats<T>& stats, bool frozen,
                  double momentum, double eps) {
  Dims4 d = Dims4::of(tape.value(x).shape);
  if (tape.value(gamma).shape != Shape{d.c} || tape.value(beta).shape != Shape{d.c} ||
      stats.mean.shape != Shape{d.c} || stats.var.shape != Shape{d.c})
    throw std::invalid_argument("batchnorm3d: per-channel vectors must be [C]");
  const std::int64_t n = d.spatial();

  Tensor<T> mu(Shape{d.c}), invstd(Shape{d.c});
  if (frozen) {
    for (std::int64_t c = 0; c < d.c; ++c) {
      mu[c] = stats.mean[c];
      const double v = static_cast<double>(stats.var[c]) + eps;
      if (v <= 0.0) throw std::invalid_argument("batchnorm3d: zero variance with zero epsilon");
      invstd[c] = static_cast<T>(1.0 / std::sqrt(v));
    }
  } else {
    for (std::int64_t c = 0; c < d.c; ++c) {
      const T* row = tape.value(x).data.data() + c * n;
      double m = 0.0;
      for (std::int64_t i = 0; i < n; ++i) m += static_cast<double>(row[i]);
      m /= static_cast<double>(n);
      double v = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double dd = static_cast<double>(row[i]) - m;
        v += dd * dd;
      }
      v /= static_cast<double>(n);
      if (v + eps <= 0.0) throw std::invalid_argument("batchnorm3d: zero variance with zero epsilon");
      mu[c] = static_cast<T>(m);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(v + eps));
      stats.mean[c] = static_cast<T>((1.0 - momentum) * static_cast<double>(stats.mean[c]) +
                                     momentum * m);
      stats.var[c] =
          static_cast<T>((1.0 - momentum) * static_cast<double>(stats.var[c]) + momentum * v);
    }
  }

  Tensor<T> out(tape.value(x).shape);
  for (std::int64_t c = 0; c < d.c; ++c) {
    const T* row = tape.value(x).data.data() + c * n;
    T* orow = out.data.data() + c * n;
    const T gm = tape.value(gamma)[c], bt = tape.value(beta)[c];
    for (std::int64_t i = 0; i < n; ++i) orow[i] = gm * (row[i] - mu[c]) * invstd[c] + bt;
  }

  return tape.push(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, d, n, mu, invstd, frozen](Tape<T>& t, Id<T> self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>&gx = t.grad(x), &gg = t.grad(gamma), &gb = t.grad(beta);
        for (std::int64_t c = 0; c < d.c; ++c) {
          const T* xrow = t.value(x).data.data() + c * n;
          const T* grow = g.data.data() + c * n;
          const double is = static_cast<double>(invstd[c]);
          const double m = static_cast<double>(mu[c]);
          const double gm = static_cast<double>(t.value(gamma)[c]);
          double sum_g = 0.0, sum_gxh = 0.0;
          for (std::int64_t i = 0; i < n; ++i) {
            const double xh = (static_cast<double>(xrow[i]) - m) * is;
            sum_g += static_cast<double>(grow[i]);
            sum_gxh += static_cast<double>(grow[i]) * xh;
          }
          if (!frozen) {
            gg[c] += static_cast<T>(sum_gxh);
            gb[c] += static_cast<T>(sum_g);
          }
          T* gxrow = gx.data.data() + c * n;
          if (frozen) {
            for (std::int64_t i = 0; i < n; ++i)
              gxrow[i] += static_cast<T>(static_cast<double>(grow[i]) * gm * is);
          } else {
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::int64_t i = 0; i < n; ++i) {
              const double xh = (static_cast<double>(xrow[i]) - m) * is;
              gxrow[i] += static_cast<T>(gm * is *
                                         (static_cast<double>(grow[i]) - inv_n * sum_g -
                                          xh * inv_n * sum_gxh));
            }
          }
        }
      },
      "batchnorm3d");
}

}  // namespace spikewarp::ops
