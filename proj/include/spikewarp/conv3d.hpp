#pragma once

// Dense 3D cross-correlation kernels (forward and exact backward rules).
// Accumulation is always carried out in double, regardless of the storage
// scalar type.

#include <vector>

#include "spikewarp/tensor.hpp"

namespace spikewarp {

struct ConvGeom {
  std::int64_t k = 3, stride = 1, pad = 1;
  std::int64_t out_dim(std::int64_t in) const { return (in + 2 * pad - k) / stride + 1; }
};

inline void check_conv_args(const Shape& in, const Shape& w, const Shape& b, const ConvGeom& g) {
  Dims4 x = Dims4::of(in);
  if (w.size() != 5) throw std::invalid_argument("conv weight must be rank 5");
  if (w[2] != g.k || w[3] != g.k || w[4] != g.k)
    throw std::invalid_argument("conv weight kernel dims disagree with geometry");
  if (g.k % 2 == 0) throw std::invalid_argument("conv kernel size must be odd");
  if (g.stride != 1 && g.stride != 2) throw std::invalid_argument("conv stride must be 1 or 2");
  if (w[1] != x.c)
    throw std::invalid_argument("conv input channels " + std::to_string(x.c) +
                                " do not match weight Cin " + std::to_string(w[1]));
  if (!b.empty() && (b.size() != 1 || b[0] != w[0]))
    throw std::invalid_argument("conv bias must be [Cout]");
  if (g.out_dim(x.d) < 1 || g.out_dim(x.h) < 1 || g.out_dim(x.w) < 1)
    throw std::invalid_argument("conv output would be empty");
}

template <class T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                         const ConvGeom& g) {
  check_conv_args(input.shape, weight.shape, bias.shape, g);
  Dims4 x = Dims4::of(input.shape);
  const std::int64_t cout = weight.shape[0], cin = x.c, k = g.k;
  const std::int64_t od = g.out_dim(x.d), oh = g.out_dim(x.h), ow = g.out_dim(x.w);
  Tensor<T> out(Shape{cout, od, oh, ow});
  const std::int64_t out_sp = od * oh * ow;
  std::vector<double> acc(static_cast<std::size_t>(out_sp));

  auto lo = [&](std::int64_t kk) {  // first output index with in-bounds tap
    std::int64_t v = g.pad - kk;
    return v <= 0 ? 0 : (v + g.stride - 1) / g.stride;
  };
  auto hi = [&](std::int64_t kk, std::int64_t in_dim) {  // inclusive last output index
    return (in_dim - 1 + g.pad - kk) / g.stride;
  };

  for (std::int64_t co = 0; co < cout; ++co) {
    const double b = bias.data.empty() ? 0.0 : static_cast<double>(bias[co]);
    std::fill(acc.begin(), acc.end(), b);
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      const T* in_c = input.data.data() + ci * x.spatial();
      const T* w_c = weight.data.data() + (co * cin + ci) * k * k * k;
      for (std::int64_t kz = 0; kz < k; ++kz) {
        const std::int64_t z0 = lo(kz), z1 = std::min(od - 1, hi(kz, x.d));
        for (std::int64_t ky = 0; ky < k; ++ky) {
          const std::int64_t y0 = lo(ky), y1 = std::min(oh - 1, hi(ky, x.h));
          for (std::int64_t kx = 0; kx < k; ++kx) {
            const std::int64_t x0 = lo(kx), x1 = std::min(ow - 1, hi(kx, x.w));
            const double wv = static_cast<double>(w_c[(kz * k + ky) * k + kx]);
            if (wv == 0.0) continue;
            for (std::int64_t z = z0; z <= z1; ++z) {
              const std::int64_t iz = z * g.stride - g.pad + kz;
              for (std::int64_t y = y0; y <= y1; ++y) {
                const std::int64_t iy = y * g.stride - g.pad + ky;
                const T* in_row = in_c + (iz * x.h + iy) * x.w - g.pad + kx;
                double* acc_row = acc.data() + (z * oh + y) * ow;
                for (std::int64_t xx = x0; xx <= x1; ++xx)
                  acc_row[xx] += wv * static_cast<double>(in_row[xx * g.stride]);
              }
            }
          }
        }
      }
    }
    T* out_c = out.data.data() + co * out_sp;
    for (std::int64_t i = 0; i < out_sp; ++i) out_c[i] = static_cast<T>(acc[static_cast<std::size_t>(i)]);
  }
  return out;
}

template <class T>
Tensor<T> conv3d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& weight,
                                const Shape& in_shape, const ConvGeom& g) {
  Dims4 x = Dims4::of(in_shape);
  Dims4 o = Dims4::of(grad_out.shape);
  const std::int64_t cout = o.c, cin = x.c, k = g.k;
  std::vector<double> acc(static_cast<std::size_t>(shape_numel(in_shape)), 0.0);

  auto lo = [&](std::int64_t kk) {
    std::int64_t v = g.pad - kk;
    return v <= 0 ? 0 : (v + g.stride - 1) / g.stride;
  };
  auto hi = [&](std::int64_t kk, std::int64_t in_dim) {
    return (in_dim - 1 + g.pad - kk) / g.stride;
  };

  for (std::int64_t co = 0; co < cout; ++co) {
    const T* g_c = grad_out.data.data() + co * o.spatial();
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      double* acc_c = acc.data() + ci * x.spatial();
      const T* w_c = weight.data.data() + (co * cin + ci) * k * k * k;
      for (std::int64_t kz = 0; kz < k; ++kz) {
        const std::int64_t z0 = lo(kz), z1 = std::min(o.d - 1, hi(kz, x.d));
        for (std::int64_t ky = 0; ky < k; ++ky) {
          const std::int64_t y0 = lo(ky), y1 = std::min(o.h - 1, hi(ky, x.h));
          for (std::int64_t kx = 0; kx < k; ++kx) {
            const std::int64_t x0 = lo(kx), x1 = std::min(o.w - 1, hi(kx, x.w));
            const double wv = static_cast<double>(w_c[(kz * k + ky) * k + kx]);
            if (wv == 0.0) continue;
            for (std::int64_t z = z0; z <= z1; ++z) {
              const std::int64_t iz = z * g.stride - g.pad + kz;
              for (std::int64_t y = y0; y <= y1; ++y) {
                const std::int64_t iy = y * g.stride - g.pad + ky;
                double* acc_row = acc_c + (iz * x.h + iy) * x.w - g.pad + kx;
                const T* g_row = g_c + (z * o.h + y) * o.w;
                for (std::int64_t xx = x0; xx <= x1; ++xx)
                  acc_row[xx * g.stride] += wv * static_cast<double>(g_row[xx]);
              }
            }
          }
        }
      }
    }
  }
  Tensor<T> out(in_shape);
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(acc[static_cast<std::size_t>(i)]);
  return out;
}

template <class T>
Tensor<T> conv3d_backward_weight(const Tensor<T>& grad_out, const Tensor<T>& input,
                                 const Shape& w_shape, const ConvGeom& g) {
  Dims4 x = Dims4::of(input.shape);
  Dims4 o = Dims4::of(grad_out.shape);
  const std::int64_t cout = o.c, cin = x.c, k = g.k;
  Tensor<T> gw(w_shape);

  auto lo = [&](std::int64_t kk) {
    std::int64_t v = g.pad - kk;
    return v <= 0 ? 0 : (v + g.stride - 1) / g.stride;
  };
  auto hi = [&](std::int64_t kk, std::int64_t in_dim) {
    return (in_dim - 1 + g.pad - kk) / g.stride;
  };

  for (std::int64_t co = 0; co < cout; ++co) {
    const T* g_c = grad_out.data.data() + co * o.spatial();
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      const T* in_c = input.data.data() + ci * x.spatial();
      T* gw_c = gw.data.data() + (co * cin + ci) * k * k * k;
      for (std::int64_t kz = 0; kz < k; ++kz) {
        const std::int64_t z0 = lo(kz), z1 = std::min(o.d - 1, hi(kz, x.d));
        for (std::int64_t ky = 0; ky < k; ++ky) {
          const std::int64_t y0 = lo(ky), y1 = std::min(o.h - 1, hi(ky, x.h));
          for (std::int64_t kx = 0; kx < k; ++kx) {
            const std::int64_t x0 = lo(kx), x1 = std::min(o.w - 1, hi(kx, x.w));
            double acc = 0.0;
            for (std::int64_t z = z0; z <= z1; ++z) {
              const std::int64_t iz = z * g.stride - g.pad + kz;
              for (std::int64_t y = y0; y <= y1; ++y) {
                const std::int64_t iy = y * g.stride - g.pad + ky;
                const T* in_row = in_c + (iz * x.h + iy) * x.w - g.pad + kx;
                const T* g_row = g_c + (z * o.h + y) * o.w;
                for (std::int64_t xx = x0; xx <= x1; ++xx)
                  acc += static_cast<double>(g_row[xx]) * static_cast<double>(in_row[xx * g.stride]);
              }
            }
            gw_c[(kz * k + ky) * k + kx] = static_cast<T>(acc);
          }
        }
      }
    }
  }
  return gw;
}

template <class T>
Tensor<T> conv3d_backward_bias(const Tensor<T>& grad_out) {
  Dims4 o = Dims4::of(grad_out.shape);
  Tensor<T> gb(Shape{o.c});
  for (std::int64_t co = 0; co < o.c; ++co) {
    double acc = 0.0;
    const T* g_c = grad_out.data.data() + co * o.spatial();
    for (std::int64_t i = 0; i < o.spatial(); ++i) acc += static_cast<double>(g_c[i]);
    gb[co] = static_cast<T>(acc);
  }
  return gb;
}

}  // namespace spikewarp
