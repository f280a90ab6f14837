#pragma once

// Spike-activity accounting and the two relative arithmetic-energy
// estimates. These are proxies, not hardware measurements, and every report
// says so.

#include <sstream>

#include "spikewarp/unet.hpp"

namespace spikewarp {

struct EnergyConstants {
  double e_ac = 0.9;   // pJ per accumulate
  double e_mac = 4.6;  // pJ per multiply-accumulate
};

struct SynopsReport {
  std::vector<std::pair<std::string, double>> per_layer;
  double total = 0.0;      // spike-driven accumulates
  double stem_macs = 0.0;  // current-injection stem, listed separately at MAC cost
};

// SynOps per layer: output spike count times the consumer fan-in. The stem
// conv consumes analog input and is carried at MAC cost on its own line.
inline SynopsReport project_synops(const NetworkSpec& spec,
                                   const std::vector<double>& spike_counts, std::int64_t D,
                                   std::int64_t H, std::int64_t W) {
  const auto inv = layer_inventory(spec);
  if (spike_counts.size() != inv.size())
    throw std::invalid_argument("project_synops: expected one spike count per spiking layer");
  const auto fans = spike_fanins(spec);
  SynopsReport rep;
  for (std::size_t i = 0; i < inv.size(); ++i) {
    const double ops = spike_counts[i] * static_cast<double>(fans[i]);
    rep.per_layer.emplace_back(inv[i].name, ops);
    rep.total += ops;
  }
  rep.stem_macs = static_cast<double>(count_macs(spec, D, H, W).per_layer[0].second);
  return rep;
}

struct EnergyRatio {
  double R = 0.0;          // snn energy / ann energy
  double reduction = 0.0;  // 1/R
};

// projected: R = (e_ac * synops) / (e_mac * macs)
inline EnergyRatio energy_ratio_projected(double ann_macs, double snn_synops,
                                          const EnergyConstants& c = {}) {
  if (!(ann_macs > 0)) throw std::invalid_argument("energy_ratio: ann macs must be positive");
  EnergyRatio r;
  r.R = (c.e_ac * snn_synops) / (c.e_mac * ann_macs);
  r.reduction = 1.0 / r.R;
  return r;
}

// analytical: R = (e_ac / e_mac) * T * mean rate
inline EnergyRatio energy_ratio_analytical(double rho_bar, std::int64_t T,
                                           const EnergyConstants& c = {}) {
  EnergyRatio r;
  r.R = (c.e_ac / c.e_mac) * static_cast<double>(T) * rho_bar;
  r.reduction = 1.0 / r.R;
  return r;
}

inline std::string energy_report(const NetworkSpec& spec, const MacCount& macs,
                                 const SynopsReport& synops, const std::vector<double>& rates,
                                 std::int64_t T, const EnergyConstants& c = {}) {
  std::ostringstream os;
  os << "# relative arithmetic-energy proxy, not a hardware measurement\n";
  os << "layer,macs,synops,rate\n";
  double rho_bar = 0.0;
  for (std::size_t i = 0; i < synops.per_layer.size(); ++i) {
    os << synops.per_layer[i].first << "," << macs.per_layer[i].second << ","
       << synops.per_layer[i].second << "," << rates[i] << "\n";
    rho_bar += rates[i];
  }
  rho_bar /= static_cast<double>(rates.size());
  os << "stem_macs," << synops.stem_macs << ",,\n";
  os << "total_macs," << macs.total << "\n";
  os << "total_synops," << synops.total << "\n";
  const auto proj = energy_ratio_projected(static_cast<double>(macs.total), synops.total, c);
  const auto ana = energy_ratio_analytical(rho_bar, T, c);
  os << "projected_R," << proj.R << "\nprojected_reduction," << proj.reduction << "\n";
  os << "analytical_R," << ana.R << "\nanalytical_reduction," << ana.reduction << "\n";
  os << "mean_rate," << rho_bar << "\n";
  return os.str();
}

}  // namespace spikewarp
