#include <random>

#include "doctest.h"
#include "spikewarp/metrics.hpp"

using namespace spikewarp;

namespace {

Tensor<double> volume(std::int64_t d, std::int64_t h, std::int64_t w) {
  return Tensor<double>(Shape{1, d, h, w});
}

// all-pairs surface distance reference, quadratic and obviously correct
std::optional<double> hd95_reference(const Tensor<double>& a, const Tensor<double>& b) {
  Dims4 d = Dims4::of(a.shape);
  std::vector<bool> ma(static_cast<std::size_t>(d.spatial())), mb(ma.size());
  for (std::int64_t i = 0; i < d.spatial(); ++i) {
    ma[static_cast<std::size_t>(i)] = a[i] != 0;
    mb[static_cast<std::size_t>(i)] = b[i] != 0;
  }
  auto surf_pts = [&](const std::vector<bool>& m) {
    std::vector<std::array<std::int64_t, 3>> pts;
    auto at = [&](std::int64_t z, std::int64_t y, std::int64_t x) {
      if (z < 0 || z >= d.d || y < 0 || y >= d.h || x < 0 || x >= d.w) return false;
      return static_cast<bool>(m[static_cast<std::size_t>((z * d.h + y) * d.w + x)]);
    };
    for (std::int64_t z = 0; z < d.d; ++z)
      for (std::int64_t y = 0; y < d.h; ++y)
        for (std::int64_t x = 0; x < d.w; ++x)
          if (at(z, y, x) && (!at(z - 1, y, x) || !at(z + 1, y, x) || !at(z, y - 1, x) ||
                              !at(z, y + 1, x) || !at(z, y, x - 1) || !at(z, y, x + 1)))
            pts.push_back({z, y, x});
    return pts;
  };
  auto pa = surf_pts(ma), pb = surf_pts(mb);
  if (pa.empty() || pb.empty()) return std::nullopt;
  std::vector<double> pooled;
  auto one_way = [&](const auto& from, const auto& to) {
    for (const auto& p : from) {
      double best = 1e30;
      for (const auto& q : to) {
        const double dz = static_cast<double>(p[0] - q[0]), dy = static_cast<double>(p[1] - q[1]),
                     dx = static_cast<double>(p[2] - q[2]);
        best = std::min(best, dz * dz + dy * dy + dx * dx);
      }
      pooled.push_back(std::sqrt(best));
    }
  };
  one_way(pa, pb);
  one_way(pb, pa);
  return percentile(pooled, 95.0);
}

}  // namespace

TEST_CASE("dice of identical segmentations is one per label") {
  auto seg = volume(4, 4, 4);
  for (std::int64_t i = 0; i < 16; ++i) seg[i] = 1;
  for (std::int64_t i = 16; i < 24; ++i) seg[i] = 2;
  auto r = dice_per_label(seg, seg, {1, 2});
  CHECK(r.per_label[0].second == doctest::Approx(1.0));
  CHECK(r.per_label[1].second == doctest::Approx(1.0));
  CHECK(r.mean == doctest::Approx(1.0));
}

TEST_CASE("dice of disjoint masks is zero and half overlap is one half") {
  auto a = volume(1, 1, 8);
  auto b = volume(1, 1, 8);
  for (std::int64_t i = 0; i < 4; ++i) a[i] = 1;
  for (std::int64_t i = 4; i < 8; ++i) b[i] = 1;
  CHECK(dice_per_label(a, b, {1}).mean == doctest::Approx(0.0));
  // shift overlap: a on [0,4), c on [2,6): intersection 2, sizes 4+4
  auto c = volume(1, 1, 8);
  for (std::int64_t i = 2; i < 6; ++i) c[i] = 1;
  CHECK(dice_per_label(a, c, {1}).mean == doctest::Approx(0.5));
}

TEST_CASE("labels absent from both volumes do not drag the mean down") {
  auto a = volume(1, 1, 4);
  a[0] = 1;
  auto r = dice_per_label(a, a, {1, 7});
  CHECK(r.per_label.size() == 1);
  CHECK(r.mean == doctest::Approx(1.0));
}

TEST_CASE("a label present on only one side scores zero") {
  auto a = volume(1, 1, 4);
  a[0] = 3;
  auto b = volume(1, 1, 4);
  auto r = dice_per_label(a, b, {3});
  CHECK(r.mean == doctest::Approx(0.0));
}

TEST_CASE("surface extraction treats the volume border as background") {
  // a full 3x3x3 block: only the center voxel has all six neighbors inside
  std::vector<bool> m(27, true);
  auto s = surface_of(m, 3, 3, 3);
  for (std::size_t i = 0; i < 27; ++i) CHECK(s[i] == (i != 13));
  // 3x3x3 cube centered in 5x5x5: only the center voxel is interior
  std::vector<bool> big(125, false);
  for (std::int64_t z = 1; z <= 3; ++z)
    for (std::int64_t y = 1; y <= 3; ++y)
      for (std::int64_t x = 1; x <= 3; ++x) big[static_cast<std::size_t>((z * 5 + y) * 5 + x)] = true;
  auto sb = surface_of(big, 5, 5, 5);
  std::int64_t count = 0;
  for (bool v : sb) count += v;
  CHECK(count == 26);
  CHECK(!sb[(2 * 5 + 2) * 5 + 2]);
}

TEST_CASE("squared distance transform against a hand case") {
  // single seed at one end of a line
  std::vector<bool> m(5, false);
  m[0] = true;
  auto d = squared_edt(m, 1, 1, 5);
  for (std::int64_t i = 0; i < 5; ++i) CHECK(d[static_cast<std::size_t>(i)] == doctest::Approx(i * i));
}

TEST_CASE("hd95 of identical masks is zero") {
  auto a = volume(6, 6, 6);
  for (std::int64_t z = 1; z < 4; ++z)
    for (std::int64_t y = 1; y < 4; ++y)
      for (std::int64_t x = 1; x < 4; ++x) a[(z * 6 + y) * 6 + x] = 1;
  auto h = hd95(a, a);
  REQUIRE(h.has_value());
  CHECK(*h == doctest::Approx(0.0));
}

TEST_CASE("hd95 of a unit shift is one") {
  auto a = volume(8, 8, 8);
  auto b = volume(8, 8, 8);
  for (std::int64_t z = 2; z < 5; ++z)
    for (std::int64_t y = 2; y < 5; ++y)
      for (std::int64_t x = 2; x < 5; ++x) {
        a[(z * 8 + y) * 8 + x] = 1;
        b[((z + 1) * 8 + y) * 8 + x] = 1;
      }
  auto h = hd95(a, b);
  REQUIRE(h.has_value());
  CHECK(*h == doctest::Approx(1.0));
}

TEST_CASE("hd95 matches the all-pairs reference on random masks") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0, 1);
  for (int rep = 0; rep < 5; ++rep) {
    auto a = volume(9, 8, 7);
    auto b = volume(9, 8, 7);
    // random blobby masks: threshold of smooth-ish random fields
    for (std::int64_t i = 0; i < a.numel(); ++i) {
      a[i] = u(rng) < 0.25 ? 1.0 : 0.0;
      b[i] = u(rng) < 0.25 ? 1.0 : 0.0;
    }
    auto fast = hd95(a, b);
    auto ref = hd95_reference(a, b);
    REQUIRE(fast.has_value() == ref.has_value());
    if (fast) CHECK(*fast == doctest::Approx(*ref).epsilon(1e-10));
  }
}

TEST_CASE("hd95 is symmetric and empty masks yield no value") {
  auto a = volume(6, 6, 6);
  auto b = volume(6, 6, 6);
  a[(2 * 6 + 2) * 6 + 2] = 1;
  b[(4 * 6 + 1) * 6 + 3] = 1;
  auto h1 = hd95(a, b);
  auto h2 = hd95(b, a);
  REQUIRE(h1.has_value());
  CHECK(*h1 == doctest::Approx(*h2));
  auto empty = volume(6, 6, 6);
  CHECK(!hd95(a, empty).has_value());
  CHECK(!hd95(empty, empty).has_value());
}

TEST_CASE("displacement statistics on a hand-built field") {
  Tensor<double> field(Shape{3, 1, 1, 2});
  // voxel 0: (3,4,0) -> norm 5; voxel 1: (0,0,0)
  field[0] = 3;  // z channel
  field[2] = 4;  // y channel
  auto [mean, mx] = displacement_stats(field);
  CHECK(mean == doctest::Approx(2.5));
  CHECK(mx == doctest::Approx(5.0));
}

TEST_CASE("retention delta keeps its sign at the fourth decimal") {
  auto [delta, ratio] = retention(0.7474, 0.7480);
  CHECK(delta == doctest::Approx(-0.0006).epsilon(1e-6));
  CHECK(ratio == doctest::Approx(0.7474 / 0.7480));
  CHECK_THROWS_AS(retention(0.5, 0.0), std::invalid_argument);
}

TEST_CASE("evaluating a pair against itself under the identity field") {
  auto img = volume(8, 8, 8);
  auto seg = volume(8, 8, 8);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (std::int64_t i = 0; i < img.numel(); ++i) img[i] = u(rng);
  for (std::int64_t z = 2; z < 6; ++z)
    for (std::int64_t y = 2; y < 6; ++y)
      for (std::int64_t x = 2; x < 6; ++x) seg[(z * 8 + y) * 8 + x] = 1;
  Tensor<double> zero_field(Shape{3, 8, 8, 8});
  auto r = evaluate_pair<double>("self", img, img, seg, seg, zero_field, 5);
  CHECK(r.dice_mean == doctest::Approx(1.0));
  CHECK(r.hd95_mean == doctest::Approx(0.0));
  CHECK(r.ncc == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(r.fold_percent == doctest::Approx(0.0));
  CHECK(r.mean_disp == doctest::Approx(0.0));
  CHECK(r.csv_row().rfind("self,", 0) == 0);
}
