#pragma once

// Paired statistical analysis: sign-flip permutation test, Wilcoxon
// signed-rank (exact for small N), percentile bootstrap, matched-pair effect
// size, and Bonferroni correction. All randomized procedures draw from
// std::mt19937_64 so results are reproducible across platforms for a fixed
// seed.

#include <map>

#include "spikewarp/conversion.hpp"  // percentile

namespace spikewarp {

// Values aligned by pair id, not position.
struct PairedSample {
  std::vector<double> deltas;  // a - b per shared pair id

  static PairedSample from_maps(const std::map<std::string, double>& a,
                                const std::map<std::string, double>& b) {
    PairedSample s;
    for (const auto& [id, va] : a) {
      auto it = b.find(id);
      if (it != b.end()) s.deltas.push_back(va - it->second);
    }
    if (s.deltas.size() < 2)
      throw std::invalid_argument("paired sample needs at least 2 shared pair ids");
    return s;
  }
};

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Two-sided sign-flip permutation test on |mean delta| with (k+1)/(n+1)
// smoothing.
inline double sign_flip_test(const std::vector<double>& deltas, std::int64_t n_flips = 20000,
                             std::uint64_t seed = 0) {
  if (deltas.size() < 2) throw std::invalid_argument("sign_flip_test: need N >= 2");
  const double observed = std::abs(mean_of(deltas));
  std::mt19937_64 rng(seed);
  std::int64_t k = 0;
  const double n = static_cast<double>(deltas.size());
  for (std::int64_t rep = 0; rep < n_flips; ++rep) {
    double s = 0;
    for (double d : deltas) s += (rng() & 1) ? d : -d;
    if (std::abs(s / n) >= observed) ++k;
  }
  return static_cast<double>(k + 1) / static_cast<double>(n_flips + 1);
}

// Exhaustive version for small N, used as an oracle and for N <= 12.
inline double sign_flip_exhaustive(const std::vector<double>& deltas) {
  const std::size_t n = deltas.size();
  if (n > 20) throw std::invalid_argument("sign_flip_exhaustive: too many pairs");
  const double observed = std::abs(mean_of(deltas));
  std::int64_t k = 0;
  const std::int64_t total = std::int64_t(1) << n;
  for (std::int64_t mask = 0; mask < total; ++mask) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += (mask >> i & 1) ? deltas[i] : -deltas[i];
    if (std::abs(s / static_cast<double>(n)) >= observed - 1e-12) ++k;
  }
  return static_cast<double>(k) / static_cast<double>(total);
}

struct WilcoxonResult {
  double w = 0;        // min(W+, W-)
  double p = 1.0;      // two-sided
  bool degenerate = false;  // all differences were zero
  std::size_t n_used = 0;   // after dropping zeros
};

// Wilcoxon signed-rank with average ranks for ties and zero differences
// dropped. Exact two-sided p (2 * P(W <= observed), capped at 1) for
// N <= 25, normal approximation with tie correction above.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& deltas) {
  std::vector<double> d;
  for (double x : deltas)
    if (x != 0.0) d.push_back(x);
  WilcoxonResult res;
  if (d.empty()) {
    res.degenerate = true;
    return res;
  }
  const std::size_t n = d.size();
  res.n_used = n;
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  // doubled ranks stay integral under average-rank ties
  std::vector<std::int64_t> rank2(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[idx[j + 1]]) == std::abs(d[idx[i]])) ++j;
    const std::int64_t avg2 = static_cast<std::int64_t>(i + j + 2);  // 2 * mean of ranks i+1..j+1
    for (std::size_t t = i; t <= j; ++t) rank2[idx[t]] = avg2;
    i = j + 1;
  }
  std::int64_t wplus2 = 0, total2 = 0;
  for (std::size_t t = 0; t < n; ++t) {
    total2 += rank2[t];
    if (d[t] > 0) wplus2 += rank2[t];
  }
  const std::int64_t wminus2 = total2 - wplus2;
  const std::int64_t w2 = std::min(wplus2, wminus2);
  res.w = static_cast<double>(w2) / 2.0;

  if (n <= 25) {
    // distribution of W+ (doubled) over all 2^n sign assignments
    std::vector<double> count(static_cast<std::size_t>(total2 + 1), 0.0);
    count[0] = 1.0;
    std::int64_t reach = 0;
    for (std::size_t t = 0; t < n; ++t) {
      reach += rank2[t];
      for (std::int64_t s = reach; s >= rank2[t]; --s)
        count[static_cast<std::size_t>(s)] += count[static_cast<std::size_t>(s - rank2[t])];
    }
    double le = 0, tot = std::pow(2.0, static_cast<double>(n));
    for (std::int64_t s = 0; s <= w2; ++s) le += count[static_cast<std::size_t>(s)];
    res.p = std::min(1.0, 2.0 * le / tot);
  } else {
    const double nn = static_cast<double>(n);
    const double mu = nn * (nn + 1.0) / 4.0;
    double tie_corr = 0.0;
    std::map<std::int64_t, double> tie_sizes;
    for (std::size_t t = 0; t < n; ++t) tie_sizes[rank2[t]] += 1.0;
    for (auto& [r, cnt] : tie_sizes) tie_corr += (cnt * cnt * cnt - cnt) / 48.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_corr;
    const double z = (res.w - mu) / std::sqrt(var);
    res.p = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  }
  return res;
}

// Percentile bootstrap interval for mean(delta).
inline std::pair<double, double> bootstrap_ci(const std::vector<double>& deltas,
                                              std::int64_t n_boot = 10000, double level = 0.95,
                                              std::uint64_t seed = 0) {
  if (deltas.size() < 2) throw std::invalid_argument("bootstrap_ci: need N >= 2");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, deltas.size() - 1);
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(n_boot));
  for (std::int64_t b = 0; b < n_boot; ++b) {
    double s = 0;
    for (std::size_t i = 0; i < deltas.size(); ++i) s += deltas[pick(rng)];
    means.push_back(s / static_cast<double>(deltas.size()));
  }
  const double alpha = 1.0 - level;
  return {percentile(means, 100.0 * alpha / 2.0), percentile(means, 100.0 * (1.0 - alpha / 2.0))};
}

struct EffectSize {
  double dz = 0.0;
  bool defined = true;  // false when sd(delta) is zero
};

// Matched-pair effect size: mean delta over the sample standard deviation
// (N-1 denominator).
inline EffectSize effect_size_dz(const std::vector<double>& deltas) {
  if (deltas.size() < 2) throw std::invalid_argument("effect_size_dz: need N >= 2");
  const double m = mean_of(deltas);
  double sq = 0;
  for (double d : deltas) sq += (d - m) * (d - m);
  const double sd = std::sqrt(sq / static_cast<double>(deltas.size() - 1));
  if (sd == 0.0) return {0.0, false};
  return {m / sd, true};
}

inline std::vector<bool> bonferroni(const std::vector<double>& p_values, double alpha = 0.05) {
  if (p_values.empty()) throw std::invalid_argument("bonferroni: need at least one p-value");
  const double thresh = alpha / static_cast<double>(p_values.size());
  std::vector<bool> out;
  for (double p : p_values) out.push_back(p < thresh);
  return out;
}

}  // namespace spikewarp
