#include <random>

#include "doctest.h"
#include "spikewarp/stats.hpp"

using namespace spikewarp;

TEST_CASE("paired sample aligns by id, not position") {
  std::map<std::string, double> a{{"p1", 0.8}, {"p2", 0.7}, {"p3", 0.6}};
  std::map<std::string, double> b{{"p3", 0.5}, {"p1", 0.9}, {"p4", 0.2}};
  auto s = PairedSample::from_maps(a, b);
  REQUIRE(s.deltas.size() == 2);
  // map iteration is ordered by id: p1 then p3
  CHECK(s.deltas[0] == doctest::Approx(-0.1));
  CHECK(s.deltas[1] == doctest::Approx(0.1));
}

TEST_CASE("paired sample with fewer than two shared ids is an error") {
  std::map<std::string, double> a{{"p1", 0.8}, {"p2", 0.7}};
  std::map<std::string, double> b{{"p1", 0.5}, {"p9", 0.5}};
  CHECK_THROWS_AS(PairedSample::from_maps(a, b), std::invalid_argument);
}

TEST_CASE("sign flip on all-zero differences gives p = 1") {
  std::vector<double> d(8, 0.0);
  CHECK(sign_flip_test(d, 2000, 7) == doctest::Approx(1.0));
  CHECK(sign_flip_exhaustive(d) == doctest::Approx(1.0));
}

TEST_CASE("exhaustive sign flip on (1,2,3)") {
  // observed |mean| = 2; only the two all-same-sign assignments reach it
  CHECK(sign_flip_exhaustive({1, 2, 3}) == doctest::Approx(2.0 / 8.0));
}

TEST_CASE("monte carlo sign flip tracks the exhaustive answer") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> gauss(0.4, 1.0);
  for (int rep = 0; rep < 4; ++rep) {
    std::vector<double> d;
    for (int i = 0; i < 10; ++i) d.push_back(gauss(rng));
    const double exact = sign_flip_exhaustive(d);
    const std::int64_t n_flips = 20000;
    const double mc = sign_flip_test(d, n_flips, 1234 + rep);
    const double se = std::sqrt(exact * (1.0 - exact) / static_cast<double>(n_flips));
    CHECK(std::abs(mc - exact) <= 3.0 * se + 2.0 / n_flips);
  }
}

TEST_CASE("sign flip is symmetric in the sign of the differences") {
  std::vector<double> d{0.3, -0.1, 0.25, 0.4, -0.05};
  std::vector<double> neg;
  for (double x : d) neg.push_back(-x);
  CHECK(sign_flip_exhaustive(d) == doctest::Approx(sign_flip_exhaustive(neg)));
}

TEST_CASE("wilcoxon on (1,2,3)") {
  auto r = wilcoxon_signed_rank({1, 2, 3});
  CHECK(r.w == doctest::Approx(0.0));
  CHECK(r.p == doctest::Approx(0.25));
  CHECK(r.n_used == 3);
  CHECK(!r.degenerate);
}

TEST_CASE("wilcoxon on a perfectly balanced pair") {
  auto r = wilcoxon_signed_rank({1, -1});
  CHECK(r.w == doctest::Approx(1.5));  // tied absolute values share rank 1.5
  CHECK(r.p == doctest::Approx(1.0));
}

TEST_CASE("wilcoxon drops zero differences") {
  auto r = wilcoxon_signed_rank({0, 0, 1, 2, 3, 0});
  CHECK(r.n_used == 3);
  CHECK(r.p == doctest::Approx(0.25));
}

TEST_CASE("wilcoxon with every difference zero is degenerate") {
  auto r = wilcoxon_signed_rank({0, 0, 0});
  CHECK(r.degenerate);
  CHECK(r.p == doctest::Approx(1.0));
}

TEST_CASE("exact wilcoxon matches brute-force enumeration, including ties") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> mag(1, 4);  // small magnitudes force ties
  std::uniform_int_distribution<int> sgn(0, 1);
  for (int rep = 0; rep < 6; ++rep) {
    std::vector<double> d;
    const int n = 5 + rep;
    for (int i = 0; i < n; ++i) d.push_back((sgn(rng) ? 1 : -1) * mag(rng));
    auto r = wilcoxon_signed_rank(d);

    // brute force: doubled average ranks of |d|, then every sign assignment
    std::vector<double> mags;
    for (double x : d) mags.push_back(std::abs(x));
    std::vector<std::int64_t> rank2(mags.size());
    for (std::size_t i = 0; i < mags.size(); ++i) {
      std::int64_t less = 0, equal = 0;
      for (double m : mags) {
        if (m < mags[i]) ++less;
        if (m == mags[i]) ++equal;
      }
      rank2[i] = 2 * less + equal + 1;  // doubled mean rank of the tie group
    }
    std::int64_t wplus2 = 0, total2 = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      total2 += rank2[i];
      if (d[i] > 0) wplus2 += rank2[i];
    }
    const std::int64_t w2 = std::min(wplus2, total2 - wplus2);
    std::int64_t le = 0;
    for (std::int64_t mask = 0; mask < (std::int64_t(1) << n); ++mask) {
      std::int64_t s = 0;
      for (int i = 0; i < n; ++i)
        if (mask >> i & 1) s += rank2[static_cast<std::size_t>(i)];
      if (s <= w2) ++le;
    }
    const double p_ref =
        std::min(1.0, 2.0 * static_cast<double>(le) / std::pow(2.0, static_cast<double>(n)));
    CHECK(r.w == doctest::Approx(static_cast<double>(w2) / 2.0));
    CHECK(r.p == doctest::Approx(p_ref));
  }
}

TEST_CASE("large-sample wilcoxon uses a sane normal approximation") {
  // 30 strongly positive differences: tiny p
  std::vector<double> pos;
  for (int i = 1; i <= 30; ++i) pos.push_back(0.5 + 0.01 * i);
  auto r1 = wilcoxon_signed_rank(pos);
  CHECK(r1.p < 1e-5);
  // alternating signs with equal magnitudes: p near 1
  std::vector<double> bal;
  for (int i = 1; i <= 30; ++i) bal.push_back((i % 2 ? 1.0 : -1.0) * i);
  auto r2 = wilcoxon_signed_rank(bal);
  CHECK(r2.p > 0.5);
}

TEST_CASE("normal approximation agrees with the exact tail at the crossover size") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.25, 1.0);
  std::vector<double> d;
  for (int i = 0; i < 25; ++i) d.push_back(gauss(rng));
  auto exact = wilcoxon_signed_rank(d);  // n = 25 takes the exact branch
  std::vector<double> d26 = d;
  d26.push_back(1e-9);  // near-zero extra pair barely moves the statistic
  auto approx = wilcoxon_signed_rank(d26);
  CHECK(std::abs(exact.p - approx.p) < 0.05);
}

TEST_CASE("bootstrap of a constant sample collapses to a point") {
  auto [lo, hi] = bootstrap_ci({0.42, 0.42, 0.42, 0.42}, 500, 0.95, 3);
  CHECK(lo == doctest::Approx(0.42));
  CHECK(hi == doctest::Approx(0.42));
}

TEST_CASE("bootstrap interval brackets the sample mean and is deterministic") {
  std::vector<double> d{0.1, 0.5, -0.2, 0.3, 0.7, 0.0, 0.4, -0.1};
  auto [lo, hi] = bootstrap_ci(d, 5000, 0.95, 42);
  const double m = mean_of(d);
  CHECK(lo < m);
  CHECK(hi > m);
  auto again = bootstrap_ci(d, 5000, 0.95, 42);
  CHECK(again.first == lo);
  CHECK(again.second == hi);
}

TEST_CASE("bootstrap coverage is near nominal") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> gauss(0.3, 1.0);
  int covered = 0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> d;
    for (int i = 0; i < 15; ++i) d.push_back(gauss(rng));
    auto [lo, hi] = bootstrap_ci(d, 2000, 0.95, 1000 + static_cast<std::uint64_t>(t));
    if (lo <= 0.3 && 0.3 <= hi) ++covered;
  }
  const double cov = static_cast<double>(covered) / trials;
  // percentile bootstrap at N=15 undercovers slightly; allow a wide band
  CHECK(cov > 0.88);
  CHECK(cov < 0.99);
}

TEST_CASE("effect size on (1,2,3) is exactly 2") {
  auto e = effect_size_dz({1, 2, 3});
  CHECK(e.defined);
  CHECK(e.dz == doctest::Approx(2.0));
}

TEST_CASE("effect size is invariant to positive scaling") {
  std::vector<double> d{0.2, -0.1, 0.4, 0.15, 0.3};
  auto e1 = effect_size_dz(d);
  for (auto& x : d) x *= 37.5;
  auto e2 = effect_size_dz(d);
  CHECK(e1.dz == doctest::Approx(e2.dz));
}

TEST_CASE("effect size of a constant sample is flagged undefined") {
  auto e = effect_size_dz({0.5, 0.5, 0.5});
  CHECK(!e.defined);
}

TEST_CASE("bonferroni threshold for ten comparisons") {
  std::vector<double> p{0.004, 0.005, 0.006, 0.04, 1e-6, 0.1, 0.2, 0.3, 0.4, 0.5};
  auto sig = bonferroni(p, 0.05);
  CHECK(sig[0]);        // 0.004 < 0.005
  CHECK(!sig[1]);       // boundary is strict
  CHECK(!sig[2]);
  CHECK(!sig[3]);       // 0.04 survives alone but not under correction
  CHECK(sig[4]);
  for (std::size_t i = 5; i < sig.size(); ++i) CHECK(!sig[i]);
}
