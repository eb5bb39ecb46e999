#ifndef PITOMO_PIPELINE_HPP
#define PITOMO_PIPELINE_HPP

// End-to-end experiment in memory: simulate the characterization and the
// tomography acquisitions, fit the timescales, fit every initialization, and
// reconstruct the map with its fidelity to the identity.

#include <set>
#include <string>
#include <vector>

#include "pitomo/channel_fit.hpp"
#include "pitomo/curve_fit.hpp"
#include "pitomo/parallel.hpp"
#include "pitomo/photostream.hpp"

namespace pitomo {

struct Initialization
{
  std::string label;
  BlochVector direction;
};

inline std::vector<Initialization> cardinal_initializations()
{
  return {{"+X", {1, 0, 0}}, {"-X", {-1, 0, 0}}, {"+Y", {0, 1, 0}},
          {"-Y", {0, -1, 0}}, {"+Z", {0, 0, 1}}, {"-Z", {0, 0, -1}}};
}

/// Optional free precession of the written ground state before conversion.
struct GroundPrecession
{
  bool enabled = false;
  double delay_ns = 0.1;
  RotationSense sense = RotationSense::Negative;
};

struct RunConfig
{
  QubitTimescales timescales;
  SimConfig sim;
  std::vector<Initialization> initializations = cardinal_initializations();
  double polarization_degree = 0.82;
  GroundPrecession ground_precession;
  int bootstrap_resamples = 200;
  std::string output_dir = "out";

  void validate() const
  {
    timescales.validate();
    sim.validate();
    if (initializations.empty())
      throw ConfigError("initializations: at least one entry required");
    std::set<std::string> seen;
    for (const auto& init : initializations) {
      if (init.label.empty() || init.label.find_first_not_of(
                                    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+-_") !=
                                    std::string::npos)
        throw ConfigError("initializations: label '" + init.label + "' must be non-empty and use [A-Za-z0-9+-_]");
      if (!seen.insert(init.label).second)
        throw ConfigError("initializations: duplicate label '" + init.label + "'");
      if (std::abs(init.direction.norm() - 1.0) > kPhysicalTol)
        throw ConfigError("initializations: direction of '" + init.label + "' is not unit norm");
    }
    if (!(polarization_degree >= 0.0 && polarization_degree <= 1.0))
      throw ConfigError("polarization_degree must lie in [0, 1]");
    if (ground_precession.delay_ns < 0.0)
      throw ConfigError("ground_precession.delay_ns must be >= 0");
    if (bootstrap_resamples < 0)
      throw ConfigError("bootstrap_resamples must be >= 0");
  }

  /// Ground state present at the conversion pulse for one initialization.
  BlochVector state_at_conversion(const Initialization& init) const
  {
    const BlochVector written = polarization_degree * init.direction;
    if (!ground_precession.enabled)
      return written;
    return precess_ground(written, ground_precession.delay_ns, timescales, ground_precession.sense);
  }
};

struct TomographyTraces
{
  std::string label;
  TimeTrace h;
  TimeTrace b;
};

struct TraceSet
{
  CharacterizationTraces characterization;
  std::vector<TomographyTraces> tomography;
};

inline std::string tomography_stream(const std::string& label, PulsePolarization pol)
{
  return "tomo_" + label + "_" + to_string(pol);
}

inline TraceSet simulate_all(const RunConfig& cfg, unsigned threads = 1)
{
  cfg.validate();
  TraceSet set;
  set.characterization = simulate_characterization(cfg.timescales, cfg.sim);
  set.tomography.resize(cfg.initializations.size());
  parallel_for(cfg.initializations.size(), threads, [&](std::size_t i) {
    const auto& init = cfg.initializations[i];
    const BlochVector s0 = cfg.state_at_conversion(init);
    SimConfig sim = cfg.sim;
    set.tomography[i].label = init.label;
    sim.seed = derive_seed(cfg.sim.seed, tomography_stream(init.label, PulsePolarization::H));
    set.tomography[i].h = simulate_trace(s0, PulsePolarization::H, cfg.timescales, sim);
    sim.seed = derive_seed(cfg.sim.seed, tomography_stream(init.label, PulsePolarization::B));
    set.tomography[i].b = simulate_trace(s0, PulsePolarization::B, cfg.timescales, sim);
  });
  return set;
}

struct StateTomography
{
  std::string label;
  BlochVector direction;
  BlochVector init_bloch; ///< polarization_degree * direction
  TomographyFit fit;
};

inline std::vector<StateTomography> tomograph_all(const std::vector<TomographyTraces>& traces,
                                                  const RunConfig& cfg, const QubitTimescales& ts,
                                                  unsigned threads = 1)
{
  std::vector<StateTomography> out(traces.size());
  parallel_for(traces.size(), threads, [&](std::size_t i) {
    const auto it = std::find_if(cfg.initializations.begin(), cfg.initializations.end(),
                                 [&](const Initialization& x) { return x.label == traces[i].label; });
    if (it == cfg.initializations.end())
      throw ConfigError("no initialization named '" + traces[i].label + "' in the configuration");
    out[i].label = it->label;
    out[i].direction = it->direction;
    out[i].init_bloch = cfg.polarization_degree * it->direction;
    out[i].fit = fit_tomography(dcp_from_trace(traces[i].h), dcp_from_trace(traces[i].b), ts);
  });
  return out;
}

inline std::vector<StatePair> make_state_pairs(const std::vector<StateTomography>& states, double polarization_degree)
{
  std::vector<StatePair> pairs;
  for (const auto& s : states)
    pairs.push_back({build_init_density(s.direction, polarization_degree), bloch_to_density(s.fit.estimate),
                     pair_weight(s.fit.covariance)});
  return pairs;
}

struct ExperimentResult
{
  CharacterizationFit characterization;
  std::vector<StateTomography> states;
  MapFit map;
  double fidelity = 0.0;
};

/// Runs the full chain once. With `fixed_timescales` the characterization fit
/// is still performed but the tomography uses the given values.
inline ExperimentResult run_experiment(const RunConfig& cfg, unsigned threads = 1,
                                       const QubitTimescales* fixed_timescales = nullptr)
{
  const TraceSet traces = simulate_all(cfg, threads);
  ExperimentResult r;
  const auto& ch = traces.characterization;
  r.characterization = fit_characterization(ch, dcp_from_trace(ch.co));
  const QubitTimescales ts = fixed_timescales ? *fixed_timescales : r.characterization.timescales();
  r.states = tomograph_all(traces.tomography, cfg, ts, threads);
  r.map = fit_map(make_state_pairs(r.states, cfg.polarization_degree));
  r.fidelity = process_fidelity(r.map.map, TransferMatrix4::Identity());
  return r;
}

} // namespace pitomo

#endif
