#pragma once

// Evaluation-time registration metrics: per-label Dice, 95th-percentile
// symmetric surface distance, windowed image NCC, displacement statistics.

#include <limits>
#include <optional>

#include "spikewarp/conversion.hpp"  // percentile
#include "spikewarp/deform.hpp"
#include "spikewarp/losses.hpp"

namespace spikewarp {

struct DiceResult {
  std::vector<std::pair<std::int64_t, double>> per_label;
  double mean = 0.0;
};

// Per label: 2|A^B| / (|A|+|B|). Labels absent from both volumes are
// excluded from the mean; labels present in exactly one score 0.
template <class T>
DiceResult dice_per_label(const Tensor<T>& fixed_seg, const Tensor<T>& warped_seg,
                          const std::vector<std::int64_t>& labels) {
  if (!fixed_seg.same_shape(warped_seg))
    throw std::invalid_argument("dice: segmentation shapes differ");
  if (labels.empty()) throw std::invalid_argument("dice: empty label list");
  DiceResult out;
  double acc = 0.0;
  std::int64_t counted = 0;
  for (std::int64_t lab : labels) {
    std::int64_t a = 0, b = 0, inter = 0;
    for (std::int64_t i = 0; i < fixed_seg.numel(); ++i) {
      const bool in_a = static_cast<std::int64_t>(fixed_seg[i]) == lab;
      const bool in_b = static_cast<std::int64_t>(warped_seg[i]) == lab;
      a += in_a;
      b += in_b;
      inter += in_a && in_b;
    }
    if (a == 0 && b == 0) continue;
    const double dice = 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
    out.per_label.emplace_back(lab, dice);
    acc += dice;
    ++counted;
  }
  out.mean = counted ? acc / static_cast<double>(counted) : 0.0;
  return out;
}

namespace edt_detail {

// One-dimensional squared Euclidean distance transform (lower envelope of
// parabolas), applied separably per axis.
inline void dt1d(std::vector<double>& f) {
  const std::int64_t n = static_cast<std::int64_t>(f.size());
  static thread_local std::vector<double> d, z;
  static thread_local std::vector<std::int64_t> v;
  d.assign(static_cast<std::size_t>(n), 0.0);
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n + 1), 0.0);
  std::int64_t k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (std::int64_t q = 1; q < n; ++q) {
    double s;
    while (true) {
      const std::int64_t p = v[static_cast<std::size_t>(k)];
      s = ((f[static_cast<std::size_t>(q)] + q * q) - (f[static_cast<std::size_t>(p)] + p * p)) /
          (2.0 * (q - p));
      if (s <= z[static_cast<std::size_t>(k)]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k + 1)] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(k + 1)] < q) ++k;
    const std::int64_t p = v[static_cast<std::size_t>(k)];
    d[static_cast<std::size_t>(q)] = (q - p) * (q - p) + f[static_cast<std::size_t>(p)];
  }
  std::copy(d.begin(), d.end(), f.begin());
}

}  // namespace edt_detail

// Exact squared Euclidean distance to the nearest set voxel, whole grid.
inline std::vector<double> squared_edt(const std::vector<bool>& set_mask, std::int64_t D,
                                       std::int64_t H, std::int64_t W) {
  const double INF = 1e18;
  std::vector<double> g(set_mask.size());
  for (std::size_t i = 0; i < set_mask.size(); ++i) g[i] = set_mask[i] ? 0.0 : INF;
  std::vector<double> line;
  // depth axis
  line.resize(static_cast<std::size_t>(D));
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x) {
      for (std::int64_t z = 0; z < D; ++z) line[static_cast<std::size_t>(z)] = g[(z * H + y) * W + x];
      edt_detail::dt1d(line);
      for (std::int64_t z = 0; z < D; ++z) g[(z * H + y) * W + x] = line[static_cast<std::size_t>(z)];
    }
  line.resize(static_cast<std::size_t>(H));
  for (std::int64_t z = 0; z < D; ++z)
    for (std::int64_t x = 0; x < W; ++x) {
      for (std::int64_t y = 0; y < H; ++y) line[static_cast<std::size_t>(y)] = g[(z * H + y) * W + x];
      edt_detail::dt1d(line);
      for (std::int64_t y = 0; y < H; ++y) g[(z * H + y) * W + x] = line[static_cast<std::size_t>(y)];
    }
  line.resize(static_cast<std::size_t>(W));
  for (std::int64_t z = 0; z < D; ++z)
    for (std::int64_t y = 0; y < H; ++y) {
      double* row = g.data() + (z * H + y) * W;
      for (std::int64_t x = 0; x < W; ++x) line[static_cast<std::size_t>(x)] = row[x];
      edt_detail::dt1d(line);
      for (std::int64_t x = 0; x < W; ++x) row[x] = line[static_cast<std::size_t>(x)];
    }
  return g;
}

// Surface voxels: mask voxels with at least one 6-connected background
// neighbor (voxels beyond the volume border count as background).
inline std::vector<bool> surface_of(const std::vector<bool>& mask, std::int64_t D, std::int64_t H,
                                    std::int64_t W) {
  std::vector<bool> surf(mask.size(), false);
  auto at = [&](std::int64_t z, std::int64_t y, std::int64_t x) {
    if (z < 0 || z >= D || y < 0 || y >= H || x < 0 || x >= W) return false;
    return static_cast<bool>(mask[(z * H + y) * W + x]);
  };
  for (std::int64_t z = 0; z < D; ++z)
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < W; ++x) {
        if (!at(z, y, x)) continue;
        if (!at(z - 1, y, x) || !at(z + 1, y, x) || !at(z, y - 1, x) || !at(z, y + 1, x) ||
            !at(z, y, x - 1) || !at(z, y, x + 1))
          surf[(z * H + y) * W + x] = true;
      }
  return surf;
}

// Symmetric 95th-percentile surface distance: pools both directed surface
// distance multisets and takes the linear-interpolation percentile. Returns
// nothing when either mask is empty (the caller logs and skips the label).
template <class T>
std::optional<double> hd95(const Tensor<T>& fixed_mask, const Tensor<T>& warped_mask) {
  if (!fixed_mask.same_shape(warped_mask)) throw std::invalid_argument("hd95: shapes differ");
  Dims4 d = Dims4::of(fixed_mask.shape);
  std::vector<bool> a(static_cast<std::size_t>(d.spatial())), b(a.size());
  for (std::int64_t i = 0; i < d.spatial(); ++i) {
    a[static_cast<std::size_t>(i)] = fixed_mask[i] != T(0);
    b[static_cast<std::size_t>(i)] = warped_mask[i] != T(0);
  }
  if (std::none_of(a.begin(), a.end(), [](bool v) { return v; }) ||
      std::none_of(b.begin(), b.end(), [](bool v) { return v; }))
    return std::nullopt;
  auto sa = surface_of(a, d.d, d.h, d.w);
  auto sb = surface_of(b, d.d, d.h, d.w);
  auto da = squared_edt(sa, d.d, d.h, d.w);
  auto db = squared_edt(sb, d.d, d.h, d.w);
  std::vector<double> pooled;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i]) pooled.push_back(std::sqrt(db[i]));
    if (sb[i]) pooled.push_back(std::sqrt(da[i]));
  }
  return percentile(pooled, 95.0);
}

template <class T>
std::pair<double, double> displacement_stats(const Tensor<T>& field) {
  Dims4 f = Dims4::of(field.shape);
  if (f.c != 3) throw std::invalid_argument("displacement_stats: field must be [3,D,H,W]");
  double sum = 0.0, mx = 0.0;
  for (std::int64_t i = 0; i < f.spatial(); ++i) {
    const double uz = field[i], uy = field[f.spatial() + i], ux = field[2 * f.spatial() + i];
    const double n = std::sqrt(uz * uz + uy * uy + ux * ux);
    sum += n;
    mx = std::max(mx, n);
  }
  return {sum / static_cast<double>(f.spatial()), mx};
}

inline std::pair<double, double> retention(double snn_dice, double ann_dice) {
  if (!(ann_dice > 0)) throw std::invalid_argument("retention: ann dice must be positive");
  return {snn_dice - ann_dice, snn_dice / ann_dice};
}

struct PairResult {
  std::string pair_id;
  double dice_mean = 0;
  std::vector<std::pair<std::int64_t, double>> dice_per_label;
  double hd95_mean = 0;
  double ncc = 0;
  double fold_percent = 0;
  double sdlogj = 0;
  double mean_disp = 0, max_disp = 0;
  std::vector<double> spike_rates;

  static std::string csv_header() {
    return "pair_id,dice_mean,hd95_mean,ncc,fold_percent,sdlogj,mean_disp,max_disp,mean_rate";
  }
  std::string csv_row() const {
    double mean_rate = 0;
    for (double r : spike_rates) mean_rate += r;
    if (!spike_rates.empty()) mean_rate /= static_cast<double>(spike_rates.size());
    std::ostringstream os;
    os << pair_id << "," << dice_mean << "," << hd95_mean << "," << ncc << "," << fold_percent
       << "," << sdlogj << "," << mean_disp << "," << max_disp << "," << mean_rate;
    return os.str();
  }
};

// Full per-pair evaluation of a displacement field against a fixed/moving
// pair with integer label maps. Labels are taken from the union of values
// present in either segmentation (background 0 excluded).
template <class T>
PairResult evaluate_pair(const std::string& pair_id, const Tensor<T>& fixed,
                         const Tensor<T>& moving, const Tensor<T>& fixed_labels,
                         const Tensor<T>& moving_labels, const Tensor<T>& field,
                         std::int64_t ncc_window = 9, double ncc_eps = 1e-8,
                         const std::vector<double>& spike_rates = {}) {
  PairResult r;
  r.pair_id = pair_id;
  Tensor<T> warped = warp_trilinear(moving, field);
  r.ncc = image_ncc(fixed, warped, ncc_window, ncc_eps);

  Tensor<T> warped_labels = warp_nearest(moving_labels, field);
  std::vector<std::int64_t> labels;
  for (const auto* seg : {&fixed_labels, &moving_labels})
    for (T v : seg->data) {
      const auto lab = static_cast<std::int64_t>(v);
      if (lab != 0 && std::find(labels.begin(), labels.end(), lab) == labels.end())
        labels.push_back(lab);
    }
  std::sort(labels.begin(), labels.end());
  if (!labels.empty()) {
    auto dice = dice_per_label(fixed_labels, warped_labels, labels);
    r.dice_mean = dice.mean;
    r.dice_per_label = dice.per_label;
    double hd_acc = 0;
    std::int64_t hd_n = 0;
    for (std::int64_t lab : labels) {
      Tensor<T> fa(fixed_labels.shape), wb(fixed_labels.shape);
      for (std::int64_t i = 0; i < fa.numel(); ++i) {
        fa[i] = static_cast<std::int64_t>(fixed_labels[i]) == lab ? T(1) : T(0);
        wb[i] = static_cast<std::int64_t>(warped_labels[i]) == lab ? T(1) : T(0);
      }
      if (auto h = hd95(fa, wb)) {
        hd_acc += *h;
        ++hd_n;
      }
    }
    r.hd95_mean = hd_n ? hd_acc / static_cast<double>(hd_n) : 0.0;
  }

  auto jac = jacobian_analysis(field);
  r.fold_percent = jac.fold_percent;
  r.sdlogj = jac.sdlogj;
  std::tie(r.mean_disp, r.max_disp) = displacement_stats(field);
  r.spike_rates = spike_rates;
  return r;
}

}  // namespace spikewarp
