#pragma once

// Spatial transformation: trilinear and nearest-neighbor warping with
// boundary clamping, scaling-and-squaring integration of stationary velocity
// fields, and Jacobian determinant analysis.
//
// A field is a [3,D,H,W] tensor in voxel units; channel c displaces along
// axis c with axes ordered (depth, height, width). The warped value at voxel
// x is the source sampled at x + u(x), sample coordinates clamped per axis to
// [0, dim-1], grid aligned to voxel centers.

#include <cmath>

#include "spikewarp/ops.hpp"

namespace spikewarp {

enum class FieldRole { displacement, velocity };

namespace warp_detail {

inline void check_field(const Shape& vol, const Shape& field) {
  if (field.size() != 4 || field[0] != 3)
    throw std::invalid_argument("field must be [3,D,H,W], got " + shape_str(field));
  if (vol.size() != 4 || vol[1] != field[1] || vol[2] != field[2] || vol[3] != field[3])
    throw std::invalid_argument("volume " + shape_str(vol) + " does not match field " +
                                shape_str(field));
}

struct Corner {
  std::int64_t i0, i1;  // bracketing indices after clamping
  double f;             // fractional weight of i1
  double dgate;         // 1 when the unclamped coordinate is strictly interior
};

inline Corner split(double p, std::int64_t dim) {
  Corner c;
  c.dgate = (p > 0.0 && p < static_cast<double>(dim - 1)) ? 1.0 : 0.0;
  double pc = std::min(std::max(p, 0.0), static_cast<double>(dim - 1));
  double fl = std::floor(pc);
  c.i0 = static_cast<std::int64_t>(fl);
  if (c.i0 >= dim - 1) {
    c.i0 = dim - 1;
    c.i1 = dim - 1;
    c.f = 0.0;
  } else {
    c.i1 = c.i0 + 1;
    c.f = pc - fl;
  }
  return c;
}

}  // namespace warp_detail

// Forward trilinear warp of a [C,D,H,W] volume by a [3,D,H,W] displacement.
template <class T>
Tensor<T> warp_trilinear(const Tensor<T>& moving, const Tensor<T>& field) {
  warp_detail::check_field(moving.shape, field.shape);
  Dims4 m = Dims4::of(moving.shape);
  Dims4 f = Dims4::of(field.shape);
  Tensor<T> out(moving.shape);
  for (std::int64_t z = 0; z < m.d; ++z)
    for (std::int64_t y = 0; y < m.h; ++y)
      for (std::int64_t x = 0; x < m.w; ++x) {
        auto cz = warp_detail::split(static_cast<double>(z) + field[f.idx(0, z, y, x)], m.d);
        auto cy = warp_detail::split(static_cast<double>(y) + field[f.idx(1, z, y, x)], m.h);
        auto cx = warp_detail::split(static_cast<double>(x) + field[f.idx(2, z, y, x)], m.w);
        for (std::int64_t c = 0; c < m.c; ++c) {
          double acc = 0.0;
          for (int bz = 0; bz < 2; ++bz)
            for (int by = 0; by < 2; ++by)
              for (int bx = 0; bx < 2; ++bx) {
                const double w = (bz ? cz.f : 1.0 - cz.f) * (by ? cy.f : 1.0 - cy.f) *
                                 (bx ? cx.f : 1.0 - cx.f);
                if (w == 0.0) continue;
                acc += w * static_cast<double>(moving[m.idx(c, bz ? cz.i1 : cz.i0,
                                                            by ? cy.i1 : cy.i0,
                                                            bx ? cx.i1 : cx.i0)]);
              }
          out[m.idx(c, z, y, x)] = static_cast<T>(acc);
        }
      }
  return out;
}

// Exact adjoints of warp_trilinear for the moving volume and the field.
template <class T>
void warp_trilinear_backward(const Tensor<T>& grad_out, const Tensor<T>& moving,
                             const Tensor<T>& field, Tensor<T>& grad_moving,
                             Tensor<T>& grad_field) {
  Dims4 m = Dims4::of(moving.shape);
  Dims4 f = Dims4::of(field.shape);
  for (std::int64_t z = 0; z < m.d; ++z)
    for (std::int64_t y = 0; y < m.h; ++y)
      for (std::int64_t x = 0; x < m.w; ++x) {
        auto cz = warp_detail::split(static_cast<double>(z) + field[f.idx(0, z, y, x)], m.d);
        auto cy = warp_detail::split(static_cast<double>(y) + field[f.idx(1, z, y, x)], m.h);
        auto cx = warp_detail::split(static_cast<double>(x) + field[f.idx(2, z, y, x)], m.w);
        double du[3] = {0.0, 0.0, 0.0};
        for (std::int64_t c = 0; c < m.c; ++c) {
          const double g = static_cast<double>(grad_out[m.idx(c, z, y, x)]);
          if (g == 0.0) continue;
          for (int bz = 0; bz < 2; ++bz)
            for (int by = 0; by < 2; ++by)
              for (int bx = 0; bx < 2; ++bx) {
                const double wz = bz ? cz.f : 1.0 - cz.f;
                const double wy = by ? cy.f : 1.0 - cy.f;
                const double wx = bx ? cx.f : 1.0 - cx.f;
                const double mv = static_cast<double>(moving[m.idx(c, bz ? cz.i1 : cz.i0,
                                                                   by ? cy.i1 : cy.i0,
                                                                   bx ? cx.i1 : cx.i0)]);
                grad_moving[m.idx(c, bz ? cz.i1 : cz.i0, by ? cy.i1 : cy.i0, bx ? cx.i1 : cx.i0)] +=
                    static_cast<T>(g * wz * wy * wx);
                du[0] += g * (bz ? 1.0 : -1.0) * wy * wx * mv;
                du[1] += g * wz * (by ? 1.0 : -1.0) * wx * mv;
                du[2] += g * wz * wy * (bx ? 1.0 : -1.0) * mv;
              }
        }
        grad_field[f.idx(0, z, y, x)] += static_cast<T>(du[0] * cz.dgate);
        grad_field[f.idx(1, z, y, x)] += static_cast<T>(du[1] * cy.dgate);
        grad_field[f.idx(2, z, y, x)] += static_cast<T>(du[2] * cx.dgate);
      }
}

namespace ops {

template <class T>
Id<T> warp_trilinear(Tape<T>& tape, Id<T> moving, Id<T> field) {
  Tensor<T> out = spikewarp::warp_trilinear(tape.value(moving), tape.value(field));
  return tape.push(std::move(out), {moving, field},
                   [moving, field](Tape<T>& t, Id<T> self) {
                     warp_trilinear_backward(t.grad(self), t.value(moving), t.value(field),
                                             t.grad(moving), t.grad(field));
                   },
                   "warp_trilinear");
}

}  // namespace ops

// Nearest-neighbor label warp. Sample coordinates are rounded half away from
// zero, then clamped. Labels must be integer-valued; not differentiable.
template <class T>
Tensor<T> warp_nearest(const Tensor<T>& labels, const Tensor<T>& field) {
  warp_detail::check_field(labels.shape, field.shape);
  for (T v : labels.data)
    if (static_cast<double>(v) != std::floor(static_cast<double>(v)))
      throw std::invalid_argument("warp_nearest: labels must be integer-valued");
  Dims4 m = Dims4::of(labels.shape);
  Dims4 f = Dims4::of(field.shape);
  auto snap = [](double p, std::int64_t dim) {
    std::int64_t i = static_cast<std::int64_t>(std::round(p));  // half away from zero
    return std::min(std::max(i, std::int64_t(0)), dim - 1);
  };
  Tensor<T> out(labels.shape);
  for (std::int64_t z = 0; z < m.d; ++z)
    for (std::int64_t y = 0; y < m.h; ++y)
      for (std::int64_t x = 0; x < m.w; ++x) {
        const std::int64_t sz = snap(static_cast<double>(z) + field[f.idx(0, z, y, x)], m.d);
        const std::int64_t sy = snap(static_cast<double>(y) + field[f.idx(1, z, y, x)], m.h);
        const std::int64_t sx = snap(static_cast<double>(x) + field[f.idx(2, z, y, x)], m.w);
        for (std::int64_t c = 0; c < m.c; ++c)
          out[m.idx(c, z, y, x)] = labels[m.idx(c, sz, sy, sx)];
      }
  return out;
}

// Scaling-and-squaring integration of a stationary velocity field:
// u_0 = v / 2^K, then K times u <- u + u(x + u(x)).
template <class T>
Tensor<T> svf_integrate(const Tensor<T>& velocity, int squarings = 7) {
  if (squarings < 1) throw std::invalid_argument("svf_integrate: need at least one squaring");
  warp_detail::check_field(velocity.shape, velocity.shape);
  Tensor<T> u = velocity;
  const double s = std::ldexp(1.0, -squarings);
  for (auto& v : u.data) v = static_cast<T>(v * s);
  for (int i = 0; i < squarings; ++i) {
    Tensor<T> composed = warp_trilinear(u, u);
    for (std::int64_t j = 0; j < u.numel(); ++j) u[j] += composed[j];
    u.require_finite("svf integration");
  }
  return u;
}

namespace ops {

template <class T>
Id<T> svf_integrate(Tape<T>& tape, Id<T> velocity, int squarings = 7) {
  if (squarings < 1) throw std::invalid_argument("svf_integrate: need at least one squaring");
  Id<T> u = scale(tape, velocity, std::ldexp(1.0, -squarings));
  for (int i = 0; i < squarings; ++i) u = add(tape, u, warp_trilinear(tape, u, u));
  return u;
}

}  // namespace ops

struct JacobianReport {
  Tensor<double> detj;   // [1,D,H,W]
  double fold_percent;   // 100 * fraction of voxels with detJ <= 0
  double sdlogj;         // std of log(detJ) over voxels with detJ > 0
};

// det(I + grad u) per voxel; central differences on the interior, one-sided
// at the faces. The log standard deviation excludes non-positive determinants.
template <class T>
JacobianReport jacobian_analysis(const Tensor<T>& field) {
  warp_detail::check_field(field.shape, field.shape);
  Dims4 f = Dims4::of(field.shape);
  JacobianReport rep;
  rep.detj = Tensor<double>(Shape{1, f.d, f.h, f.w});

  auto diff = [&](std::int64_t ch, int axis, std::int64_t z, std::int64_t y, std::int64_t x) {
    std::int64_t dims[3] = {f.d, f.h, f.w};
    std::int64_t pos[3] = {z, y, x};
    const std::int64_t dim = dims[axis];
    std::int64_t lo[3] = {z, y, x}, hi[3] = {z, y, x};
    double denom;
    if (pos[axis] == 0) {
      hi[axis] = 1;
      denom = 1.0;
    } else if (pos[axis] == dim - 1) {
      lo[axis] = dim - 2;
      denom = 1.0;
    } else {
      lo[axis] -= 1;
      hi[axis] += 1;
      denom = 2.0;
    }
    return (static_cast<double>(field[f.idx(ch, hi[0], hi[1], hi[2])]) -
            static_cast<double>(field[f.idx(ch, lo[0], lo[1], lo[2])])) /
           denom;
  };

  std::int64_t folded = 0, positive = 0;
  double log_sum = 0.0, log_sq = 0.0;
  for (std::int64_t z = 0; z < f.d; ++z)
    for (std::int64_t y = 0; y < f.h; ++y)
      for (std::int64_t x = 0; x < f.w; ++x) {
        double J[3][3];
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c)
            J[r][c] = (r == c ? 1.0 : 0.0) + diff(r, c, z, y, x);
        const double det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                           J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                           J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
        rep.detj[f.spatial() * 0 + (z * f.h + y) * f.w + x] = det;
        if (det <= 0.0) {
          ++folded;
        } else {
          ++positive;
          const double l = std::log(det);
          log_sum += l;
          log_sq += l * l;
        }
      }
  const double n = static_cast<double>(f.spatial());
  rep.fold_percent = 100.0 * static_cast<double>(folded) / n;
  if (positive > 0) {
    const double mean = log_sum / static_cast<double>(positive);
    const double var = std::max(0.0, log_sq / static_cast<double>(positive) - mean * mean);
    rep.sdlogj = std::sqrt(var);
  } else {
    rep.sdlogj = 0.0;
  }
  return rep;
}

}  // namespace spikewarp
