#pragma once

// Synthetic registration pairs: a multi-blob phantom with matching labels,
// deformed by a smoothed random stationary velocity field. Deterministic for
// a fixed seed.

#include "spikewarp/deform.hpp"
#include "spikewarp/tensor.hpp"

namespace spikewarp {

struct SyntheticConfig {
  std::int64_t dim = 32;        // cubic volumes
  std::int64_t classes = 4;     // labeled blobs, labels 1..classes (0 = background)
  double amplitude = 3.0;       // max |velocity| component in voxels
  double smoothness = 1.5;      // gaussian sigma applied to the white-noise velocity
  int squarings = 7;
  std::uint64_t seed = 0;

  void validate() const {
    if (dim < 8) throw std::invalid_argument("synthetic: dim must be >= 8");
    if (classes < 1) throw std::invalid_argument("synthetic: need at least one class");
    if (amplitude < 0) throw std::invalid_argument("synthetic: amplitude must be >= 0");
    if (smoothness <= 0) throw std::invalid_argument("synthetic: smoothness must be positive");
  }
};

template <class T>
struct SyntheticPair {
  Tensor<T> fixed, moving;
  Tensor<T> fixed_labels, moving_labels;
  Tensor<T> velocity;      // [3,D,H,W] stationary velocity
  Tensor<T> displacement;  // integrated field mapping moving to fixed
  int retries = 0;         // amplitude halvings needed to reach a fold-free field
};

namespace synth_detail {

// Separable gaussian blur of each channel, truncated at 3 sigma.
template <class T>
Tensor<T> gaussian_smooth(const Tensor<T>& x, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    ksum += k[static_cast<std::size_t>(i + radius)];
  }
  for (auto& v : k) v /= ksum;

  Dims4 d = Dims4::of(x.shape);
  Tensor<T> cur = x, next(x.shape);
  const std::int64_t strides[3] = {d.h * d.w, d.w, 1};
  const std::int64_t dims[3] = {d.d, d.h, d.w};
  for (int axis = 0; axis < 3; ++axis) {
    for (std::int64_t c = 0; c < d.c; ++c)
      for (std::int64_t z = 0; z < d.d; ++z)
        for (std::int64_t y = 0; y < d.h; ++y)
          for (std::int64_t xx = 0; xx < d.w; ++xx) {
            const std::int64_t pos[3] = {z, y, xx};
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) {
              std::int64_t p = pos[axis] + i;
              p = std::min(dims[axis] - 1, std::max<std::int64_t>(0, p));  // clamp at faces
              const std::int64_t idx = c * d.spatial() + (axis == 0 ? p : z) * strides[0] +
                                       (axis == 1 ? p : y) * strides[1] +
                                       (axis == 2 ? p : xx) * strides[2];
              acc += k[static_cast<std::size_t>(i + radius)] * static_cast<double>(cur[idx]);
            }
            next[c * d.spatial() + z * strides[0] + y * strides[1] + xx] = static_cast<T>(acc);
          }
    std::swap(cur, next);
  }
  return cur;
}

}  // namespace synth_detail

// Phantom: smooth background texture plus `classes` soft-edged spherical
// blobs with distinct intensities; labels mark the blob interiors.
template <class T>
void make_phantom(const SyntheticConfig& cfg, std::mt19937_64& rng, Tensor<T>& image,
                  Tensor<T>& labels) {
  const std::int64_t n = cfg.dim;
  image = Tensor<T>(Shape{1, n, n, n});
  labels = Tensor<T>(Shape{1, n, n, n});
  std::uniform_real_distribution<double> cdist(0.22, 0.78), idist(0.4, 1.0);
  const double rmin = static_cast<double>(n) * 0.10, rmax = static_cast<double>(n) * 0.18;
  std::uniform_real_distribution<double> rdist(rmin, rmax);

  struct Blob {
    double cz, cy, cx, r, intensity;
  };
  std::vector<Blob> blobs;
  for (std::int64_t c = 0; c < cfg.classes; ++c)
    blobs.push_back({cdist(rng) * n, cdist(rng) * n, cdist(rng) * n, rdist(rng), idist(rng)});

  for (std::int64_t z = 0; z < n; ++z)
    for (std::int64_t y = 0; y < n; ++y)
      for (std::int64_t x = 0; x < n; ++x) {
        const std::int64_t idx = (z * n + y) * n + x;
        // low-frequency background so the similarity term has texture everywhere
        double v = 0.08 * (1.0 + std::sin(2.0 * 3.14159265358979323846 * z / n) *
                                     std::cos(2.0 * 3.14159265358979323846 * (y + x) / n));
        std::int64_t best = 0;
        double best_d = 1e30;
        for (std::size_t b = 0; b < blobs.size(); ++b) {
          const double dz = z - blobs[b].cz, dy = y - blobs[b].cy, dx = x - blobs[b].cx;
          const double dist = std::sqrt(dz * dz + dy * dy + dx * dx);
          // soft half-voxel edge keeps the image differentiable-ish for NCC
          const double inside = 1.0 / (1.0 + std::exp(2.0 * (dist - blobs[b].r)));
          v += blobs[b].intensity * inside;
          if (dist < blobs[b].r && dist < best_d) {
            best_d = dist;
            best = static_cast<std::int64_t>(b) + 1;
          }
        }
        image[idx] = static_cast<T>(std::min(v, 1.5));
        labels[idx] = static_cast<T>(best);
      }
}

// Builds a pair as fixed = warp(phantom), moving = phantom, so the generating
// displacement maps the moving phantom exactly onto the fixed one and
// warping the moving labels with it reproduces the fixed labels identically.
// If the sampled field folds, the amplitude is halved and the field redrawn.
template <class T>
SyntheticPair<T> generate_pair(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticPair<T> out;
  std::mt19937_64 rng(cfg.seed);
  make_phantom(cfg, rng, out.moving, out.moving_labels);

  const std::int64_t n = cfg.dim;
  double amp = cfg.amplitude;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 8) throw std::runtime_error("synthetic: could not draw a fold-free field");
    out.velocity = Tensor<T>(Shape{3, n, n, n});
    if (amp > 0) {
      std::normal_distribution<double> noise(0.0, 1.0);
      for (auto& v : out.velocity.data) v = static_cast<T>(noise(rng));
      out.velocity = synth_detail::gaussian_smooth(out.velocity, cfg.smoothness);
      double vmax = 0;
      for (T v : out.velocity.data) vmax = std::max(vmax, std::abs(static_cast<double>(v)));
      if (vmax > 0)
        for (auto& v : out.velocity.data) v = static_cast<T>(v * (amp / vmax));
    }
    out.displacement = svf_integrate(out.velocity, cfg.squarings);
    const auto jac = jacobian_analysis(out.displacement);
    if (jac.fold_percent == 0.0) break;
    amp *= 0.5;
    ++out.retries;
  }

  out.fixed = warp_trilinear(out.moving, out.displacement);
  out.fixed_labels = warp_nearest(out.moving_labels, out.displacement);
  return out;
}

}  // namespace spikewarp
