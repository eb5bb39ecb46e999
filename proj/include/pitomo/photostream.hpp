#ifndef PITOMO_PHOTOSTREAM_HPP
#define PITOMO_PHOTOSTREAM_HPP

// Monte-Carlo generation of binned, circularly resolved photon counts.
//
// Each excitation cycle emits one photon with intensity I(t) = exp(-t/tau_r)/tau_r,
// split between the R and L channels according to the DCP model. Expected counts
// per bin are n_cycles * efficiency * (bin integral), the analyzer error mixes the
// two channels incoherently, and each bin/channel is an independent Poisson draw.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "pitomo/dynamics.hpp"

namespace pitomo {

inline constexpr int kBinSubsamples = 8;

struct SimConfig
{
  std::uint64_t n_cycles = 10'000'000;
  double collection_efficiency = 1.0;
  double bin_width = 0.05; ///< ns
  double window = 8.0;     ///< ns
  double analyzer_error = 0.0; ///< radians
  std::uint64_t seed = 1;
  double rep_rate_mhz = 76.0;

  double repetition_period() const { return 1e3 / rep_rate_mhz; }
  std::size_t n_bins() const { return static_cast<std::size_t>(std::floor(window / bin_width + 1e-9)); }

  void validate() const
  {
    if (n_cycles < 1)
      throw ConfigError("sim.n_cycles must be >= 1");
    if (!(collection_efficiency > 0.0 && collection_efficiency <= 1.0))
      throw ConfigError("sim.collection_efficiency must lie in (0, 1]");
    if (!(bin_width > 0.0))
      throw ConfigError("sim.bin_width must be > 0");
    if (!(window >= bin_width))
      throw ConfigError("sim.window must be >= sim.bin_width");
    if (!(rep_rate_mhz > 0.0))
      throw ConfigError("sim.rep_rate_mhz must be > 0");
    if (window > repetition_period() + 1e-12)
      throw ConfigError("sim.window of " + std::to_string(window) + " ns exceeds the repetition period of " +
                        std::to_string(repetition_period()) + " ns; consecutive cycles would overlap");
    if (!std::isfinite(analyzer_error))
      throw ConfigError("sim.analyzer_error must be finite");
  }
};

struct TimeTrace
{
  double bin_width = 0.05;
  std::vector<double> bin_start;
  std::vector<std::uint64_t> counts_r;
  std::vector<std::uint64_t> counts_l;

  std::size_t size() const { return bin_start.size(); }
  std::uint64_t total() const
  {
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < size(); ++i)
      n += counts_r[i] + counts_l[i];
    return n;
  }
  bool operator==(const TimeTrace&) const = default;
};

struct DcpTrace
{
  double bin_width = 0.05;
  std::vector<double> t; ///< bin centers
  std::vector<double> dcp;
  std::vector<double> sigma;
  std::vector<bool> included; ///< false for bins with no counts
  std::vector<std::uint64_t> total;

  std::size_t size() const { return t.size(); }
};

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream seed for a named trace derived from a run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream)
{
  std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(seed ^ splitmix64(h));
}

/// Midpoint-rule integral of (I_R, I_L) over [t_lo, t_lo + width).
inline IntensityPair bin_intensity(double t_lo, double width, const PrecessionParams& p, const QubitTimescales& ts,
                                   double i0)
{
  const double h = width / kBinSubsamples;
  IntensityPair acc;
  for (int k = 0; k < kBinSubsamples; ++k) {
    const IntensityPair ip = intensity_pair(t_lo + (k + 0.5) * h, p, ts, i0);
    acc.r += ip.r;
    acc.l += ip.l;
  }
  return {acc.r * h, acc.l * h};
}

/// Bin-averaged DCP: ratio of the bin-integrated intensity difference and sum.
inline double bin_dcp(double t_lo, double width, const PrecessionParams& p, const QubitTimescales& ts)
{
  const IntensityPair ip = bin_intensity(t_lo, width, p, ts, 1.0);
  return (ip.r - ip.l) / (ip.r + ip.l);
}

inline IntensityPair mix_channels(const IntensityPair& lambda, double analyzer_error)
{
  const double c2 = std::cos(analyzer_error) * std::cos(analyzer_error);
  const double s2 = 1.0 - c2;
  return {lambda.r * c2 + lambda.l * s2, lambda.l * c2 + lambda.r * s2};
}

/// Expected (R, L) counts per bin, after channel mixing.
inline std::vector<IntensityPair> expected_counts(const PrecessionParams& p, const QubitTimescales& ts,
                                                  const SimConfig& cfg)
{
  const double i0 = 1.0 / ts.tau_r;
  const double scale = static_cast<double>(cfg.n_cycles) * cfg.collection_efficiency;
  std::vector<IntensityPair> out(cfg.n_bins());
  for (std::size_t b = 0; b < out.size(); ++b) {
    const IntensityPair ip = bin_intensity(static_cast<double>(b) * cfg.bin_width, cfg.bin_width, p, ts, i0);
    out[b] = mix_channels({scale * ip.r, scale * ip.l}, cfg.analyzer_error);
  }
  return out;
}

namespace detail {

inline std::uint64_t poisson_draw(double mean, std::uint64_t seed)
{
  if (!(mean > 0.0))
    return 0;
  std::mt19937_64 eng(seed);
  std::poisson_distribution<std::uint64_t> dist(mean);
  return dist(eng);
}

} // namespace detail

/// Samples a trace for a given excited-qubit precession. Every bin and channel
/// uses its own generator keyed on (seed, bin, channel), so a small change of the
/// expected counts perturbs the draws only slightly.
inline TimeTrace simulate_precession_trace(const PrecessionParams& p, const QubitTimescales& ts,
                                           const SimConfig& cfg, bool swap_channels = false)
{
  cfg.validate();
  ts.validate();
  const auto lambda = expected_counts(p, ts, cfg);
  TimeTrace tr;
  tr.bin_width = cfg.bin_width;
  tr.bin_start.resize(lambda.size());
  tr.counts_r.resize(lambda.size());
  tr.counts_l.resize(lambda.size());
  for (std::size_t b = 0; b < lambda.size(); ++b) {
    tr.bin_start[b] = static_cast<double>(b) * cfg.bin_width;
    const std::uint64_t key = splitmix64(cfg.seed ^ splitmix64(b));
    const std::uint64_t nr = detail::poisson_draw(lambda[b].r, splitmix64(key ^ 0x52));
    const std::uint64_t nl = detail::poisson_draw(lambda[b].l, splitmix64(key ^ 0x4c));
    tr.counts_r[b] = swap_channels ? nl : nr;
    tr.counts_l[b] = swap_channels ? nr : nl;
  }
  return tr;
}

inline TimeTrace simulate_trace(const BlochVector& s0, PulsePolarization pol, const QubitTimescales& ts,
                                const SimConfig& cfg)
{
  if (!s0.is_physical())
    throw PhysicalityError("simulate_trace: ground state lies outside the Bloch ball");
  return simulate_precession_trace(precession_params(convert_pulse(s0, pol)), ts, cfg);
}

struct CharacterizationTraces
{
  TimeTrace co;    ///< R excitation; counts_r is co-circular
  TimeTrace cross; ///< R excitation with the analyzer swapped; counts_r is cross-circular
  TimeTrace h;     ///< H excitation of the mixed state; both channels decay identically
};

/// The three characterization acquisitions on an unpolarized ground qubit.
inline CharacterizationTraces simulate_characterization(const QubitTimescales& ts, const SimConfig& cfg)
{
  SimConfig c = cfg;
  CharacterizationTraces out;
  c.seed = derive_seed(cfg.seed, "char_co");
  out.co = simulate_precession_trace({1.0, 0.0}, ts, c);
  c.seed = derive_seed(cfg.seed, "char_cross");
  out.cross = simulate_precession_trace({1.0, 0.0}, ts, c, /*swap_channels=*/true);
  c.seed = derive_seed(cfg.seed, "char_h");
  out.h = simulate_precession_trace({0.0, 0.0, false}, ts, c);
  return out;
}

inline DcpTrace dcp_from_trace(const TimeTrace& tr)
{
  DcpTrace d;
  d.bin_width = tr.bin_width;
  const std::size_t n = tr.size();
  d.t.resize(n);
  d.dcp.assign(n, 0.0);
  d.sigma.assign(n, 0.0);
  d.included.assign(n, false);
  d.total.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    d.t[i] = tr.bin_start[i] + 0.5 * tr.bin_width;
    const double nr = static_cast<double>(tr.counts_r[i]);
    const double nl = static_cast<double>(tr.counts_l[i]);
    const double tot = nr + nl;
    d.total[i] = tr.counts_r[i] + tr.counts_l[i];
    if (tot <= 0.0)
      continue;
    d.included[i] = true;
    d.dcp[i] = (nr - nl) / tot;
    d.sigma[i] = (nr == 0.0 || nl == 0.0) ? 1.0 / tot : 2.0 * std::sqrt(nr * nl / (tot * tot * tot));
  }
  return d;
}

} // namespace pitomo

#endif
