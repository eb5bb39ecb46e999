#ifndef PITOMO_DYNAMICS_HPP
#define PITOMO_DYNAMICS_HPP

// Analytic forward model of the Pi-system readout: pulse conversion of the
// ground qubit onto the excited qubit, precession of the excited qubit about
// its X eigenstate axis with Gaussian dephasing, radiative decay, the
// circularly polarized intensities and their degree of circular polarization.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "pitomo/bloch.hpp"

namespace pitomo {

enum class PulsePolarization { R, L, H, B };

inline const char* to_string(PulsePolarization p)
{
  switch (p) {
  case PulsePolarization::R: return "R";
  case PulsePolarization::L: return "L";
  case PulsePolarization::H: return "H";
  case PulsePolarization::B: return "B";
  }
  return "?";
}

inline PulsePolarization polarization_from_string(const std::string& s)
{
  if (s == "R") return PulsePolarization::R;
  if (s == "L") return PulsePolarization::L;
  if (s == "H") return PulsePolarization::H;
  if (s == "B") return PulsePolarization::B;
  throw ConfigError("unknown pulse polarization '" + s + "'");
}

struct PrecessionParams
{
  double v0 = 0.0;  ///< amplitude, in [0, 1]
  double phi0 = 0.0; ///< phase, radians in (-pi, pi]
  bool informative = true; ///< false when v0 is too small for the phase to mean anything
};

/// All times in ns. Infinite t2_star (no dephasing) and t_ground (no ground
/// precession) are allowed.
struct QubitTimescales
{
  double t_excited = 5.70;
  double t2_star = 5.75;
  double tau_r = 0.39;
  double t_ground = std::numeric_limits<double>::infinity();

  void validate() const
  {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0))
        throw ConfigError(std::string("timescales.") + name + " must be strictly positive");
    };
    positive(t_excited, "t_excited");
    positive(t2_star, "t2_star");
    positive(tau_r, "tau_r");
    positive(t_ground, "t_ground");
    if (!std::isfinite(t_excited) || !std::isfinite(tau_r))
      throw ConfigError("timescales.t_excited and timescales.tau_r must be finite");
  }
};

/// Sense of the ground-qubit rotation about X. `Negative` matches the sense of
/// the excited-qubit precession, whose phase decreases as 2 pi t / T.
enum class RotationSense { Negative = -1, Positive = 1 };

inline constexpr double kDegeneratePhaseTol = 1e-12;
inline constexpr double kHbConsistencyWarn = 0.1;

/// Wraps an angle into (-pi, pi].
inline double wrap_phase(double a)
{
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::remainder(a, two_pi);
  if (w <= -std::numbers::pi)
    w += two_pi;
  return w;
}

inline BlochVector convert_pulse(const BlochVector& s0, PulsePolarization pol)
{
  switch (pol) {
  case PulsePolarization::R: return {0.0, 0.0, 1.0};
  case PulsePolarization::L: return {0.0, 0.0, -1.0};
  case PulsePolarization::H: return s0;
  case PulsePolarization::B: return {-s0.sy, s0.sx, s0.sz};
  }
  throw std::logic_error("convert_pulse: bad polarization");
}

/// Amplitude and phase of the Z projection of a state precessing about X.
inline PrecessionParams precession_params(const BlochVector& excited0)
{
  PrecessionParams p;
  p.v0 = std::hypot(excited0.sy, excited0.sz);
  if (p.v0 < kDegeneratePhaseTol) {
    p.phi0 = 0.0;
    p.informative = false;
  } else {
    p.phi0 = std::atan2(excited0.sy, excited0.sz);
  }
  return p;
}

inline double sz_excited(double t, const PrecessionParams& p, const QubitTimescales& ts)
{
  return p.v0 * std::cos(-2.0 * std::numbers::pi * t / ts.t_excited + p.phi0);
}

inline double dephasing_envelope(double t, const QubitTimescales& ts)
{
  const double r = t / ts.t2_star;
  return std::exp(-r * r);
}

inline double dcp_model(double t, const PrecessionParams& p, const QubitTimescales& ts)
{
  return dephasing_envelope(t, ts) * sz_excited(t, p, ts);
}

inline double radiative_intensity(double t, const QubitTimescales& ts, double i0)
{
  return i0 * std::exp(-t / ts.tau_r);
}

struct IntensityPair
{
  double r = 0.0;
  double l = 0.0;
};

inline IntensityPair intensity_pair(double t, const PrecessionParams& p, const QubitTimescales& ts, double i0)
{
  const double total = radiative_intensity(t, ts, i0);
  const double d = dcp_model(t, p, ts);
  return {0.5 * total * (1.0 + d), 0.5 * total * (1.0 - d)};
}

struct HbInversion
{
  BlochVector s;
  double residual = 0.0; ///< |V_H cos phi_H - V_B cos phi_B|, two estimates of S_Z
  bool consistent = true; ///< false when residual exceeds kHbConsistencyWarn
};

/// Closed-form ground state from the H- and B-conversion precession parameters.
inline HbInversion invert_hb(const PrecessionParams& h, const PrecessionParams& b)
{
  const double sz_h = h.v0 * std::cos(h.phi0);
  const double sz_b = b.v0 * std::cos(b.phi0);
  HbInversion out;
  out.s = {b.v0 * std::sin(b.phi0), h.v0 * std::sin(h.phi0), 0.5 * (sz_h + sz_b)};
  out.residual = std::abs(sz_h - sz_b);
  out.consistent = out.residual <= kHbConsistencyWarn;
  return out;
}

/// Free precession of the ground qubit about X for dt ns.
inline BlochVector precess_ground(const BlochVector& s0, double dt, const QubitTimescales& ts,
                                  RotationSense sense = RotationSense::Negative)
{
  if (dt < 0.0)
    throw std::invalid_argument("precess_ground: dt must be non-negative");
  if (!std::isfinite(ts.t_ground))
    return s0;
  const double theta = static_cast<int>(sense) * 2.0 * std::numbers::pi * dt / ts.t_ground;
  const double c = std::cos(theta), s = std::sin(theta);
  return {s0.sx, s0.sy * c + s0.sz * s, s0.sz * c - s0.sy * s};
}

} // namespace pitomo

#endif
