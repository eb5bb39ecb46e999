#ifndef PITOMO_CURVE_FIT_HPP
#define PITOMO_CURVE_FIT_HPP

// Weighted nonlinear least squares (projected Levenberg-Marquardt with a
// central-difference Jacobian) and the two fitting protocols built on it:
// the characterization fit of the excited-qubit timescales and the
// per-initialization tomography fit of the ground-state Bloch vector.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pitomo/dynamics.hpp"
#include "pitomo/photostream.hpp"

namespace pitomo {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct ParamSpec
{
  std::string name;
  double lower = -kInf;
  double upper = kInf;
  bool periodic = false; ///< angle wrapped into (-pi, pi] after every step
};

struct FitOptions
{
  int max_iterations = 500;
  double rel_chi2_tol = 1e-10;
  double step_tol = 1e-12;
};

struct FitResult
{
  std::vector<std::string> names;
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;
  double chi2 = 0.0;
  double reduced_chi2 = 0.0;
  Eigen::VectorXd normalized_residuals; ///< (data - model) / sigma per included point
  bool converged = false;
  int iterations = 0;
  std::vector<bool> at_bound;
  std::string message;

  int index(const std::string& name) const
  {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name)
        return static_cast<int>(i);
    throw std::out_of_range("FitResult: no parameter named '" + name + "'");
  }
  double value(const std::string& name) const { return params(index(name)); }
  double sigma(const std::string& name) const
  {
    const int i = index(name);
    return std::sqrt(std::max(covariance(i, i), 0.0));
  }
  bool any_at_bound() const { return std::find(at_bound.begin(), at_bound.end(), true) != at_bound.end(); }
};

/// Returns the normalized residual vector (data - model) / sigma for parameters p.
using ResidualFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

namespace detail {

inline Eigen::VectorXd constrain(Eigen::VectorXd p, const std::vector<ParamSpec>& spec)
{
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (spec[i].periodic)
      p(i) = wrap_phase(p(i));
    p(i) = std::clamp(p(i), spec[i].lower, spec[i].upper);
  }
  return p;
}

inline Eigen::MatrixXd jacobian(const ResidualFunction& f, const Eigen::VectorXd& p, Eigen::Index m)
{
  Eigen::MatrixXd jac(m, p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const double h = 6e-6 * std::max(std::abs(p(j)), 1e-3); // ~cbrt(eps), balances truncation and rounding
    Eigen::VectorXd hi = p, lo = p;
    hi(j) += h;
    lo(j) -= h;
    jac.col(j) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return jac;
}

inline double step_norm(const Eigen::VectorXd& from, const Eigen::VectorXd& to, const std::vector<ParamSpec>& spec)
{
  double acc = 0.0;
  for (Eigen::Index i = 0; i < from.size(); ++i) {
    double d = to(i) - from(i);
    if (spec[i].periodic)
      d = wrap_phase(d);
    d /= std::max(std::abs(from(i)), 1.0);
    acc += d * d;
  }
  return std::sqrt(acc);
}

} // namespace detail

/// Bounded Levenberg-Marquardt minimization of the squared norm of f.
///
/// Converges when an accepted step lowers chi^2 by a relative amount below
/// rel_chi2_tol, when the scaled step is below step_tol, or when no damped step
/// can lower chi^2 any further. The covariance is the inverse of the undamped
/// normal matrix J^T J at the optimum; a singular normal matrix is reported as
/// non-convergence.
inline FitResult least_squares(const ResidualFunction& f, const std::vector<ParamSpec>& spec,
                               const Eigen::VectorXd& init, const FitOptions& opt = {})
{
  if (static_cast<std::size_t>(init.size()) != spec.size())
    throw std::invalid_argument("least_squares: init and parameter spec sizes differ");

  FitResult res;
  for (const auto& s : spec)
    res.names.push_back(s.name);

  Eigen::VectorXd p = detail::constrain(init, spec);
  Eigen::VectorXd r = f(p);
  const Eigen::Index m = r.size();
  const Eigen::Index k = p.size();
  if (m < k + 1)
    throw FitError("least_squares: need at least " + std::to_string(k + 1) + " points, got " + std::to_string(m));
  if (!r.allFinite())
    throw FitError("least_squares: residuals are not finite at the initial point");

  double chi2 = r.squaredNorm();
  double lambda = 1e-3;
  bool converged = chi2 == 0.0;
  int it = 0;
  while (!converged && it < opt.max_iterations) {
    ++it;
    const Eigen::MatrixXd jac = detail::jacobian(f, p, m);
    const Eigen::MatrixXd a = jac.transpose() * jac;
    const Eigen::VectorXd g = jac.transpose() * r;
    const double diag_floor = 1e-12 * std::max(a.diagonal().maxCoeff(), 1e-300);
    const Eigen::VectorXd d = a.diagonal().cwiseMax(diag_floor);

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = a;
      damped.diagonal() += lambda * d;
      const Eigen::VectorXd delta = damped.ldlt().solve(-g);
      const Eigen::VectorXd trial = detail::constrain(p + delta, spec);
      const Eigen::VectorXd rt = f(trial);
      const double chi2_t = rt.allFinite() ? rt.squaredNorm() : kInf;
      if (delta.allFinite() && chi2_t <= chi2) {
        const double rel = chi2 > 0.0 ? (chi2 - chi2_t) / chi2 : 0.0;
        const double step = detail::step_norm(p, trial, spec);
        p = trial;
        r = rt;
        chi2 = chi2_t;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (rel < opt.rel_chi2_tol || step < opt.step_tol || chi2 == 0.0)
          converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          converged = true; // no descent direction left at working precision
          break;
        }
      }
    }
  }

  // Undamped Gauss-Newton polish: the stopping rule can fire while damping
  // still holds the iterate ~1e-9 away from the minimum.
  if (converged) {
    for (int polish = 0; polish < 3; ++polish) {
      const Eigen::MatrixXd jac = detail::jacobian(f, p, m);
      const Eigen::VectorXd delta = (jac.transpose() * jac).ldlt().solve(-(jac.transpose() * r));
      if (!delta.allFinite())
        break;
      const Eigen::VectorXd trial = detail::constrain(p + delta, spec);
      const Eigen::VectorXd rt = f(trial);
      // near the minimum chi^2 is flat to rounding, so allow a rounding-level rise
      if (!rt.allFinite() || rt.squaredNorm() > chi2 * (1.0 + 64.0 * std::numeric_limits<double>::epsilon()))
        break;
      p = trial;
      r = rt;
      chi2 = rt.squaredNorm();
    }
  }

  res.params = p;
  res.iterations = it;
  res.chi2 = chi2;
  res.reduced_chi2 = chi2 / static_cast<double>(m - k);
  res.normalized_residuals = r;
  res.converged = converged;
  if (!converged)
    res.message = "iteration limit reached";

  // Singularity is judged on the unit-diagonal scaling of J^T J so that
  // parameters of very different magnitude do not look degenerate.
  const Eigen::MatrixXd jac = detail::jacobian(f, p, m);
  const Eigen::MatrixXd a = jac.transpose() * jac;
  const Eigen::VectorXd diag = a.diagonal();
  bool singular = !a.allFinite() || (diag.array() <= 0.0).any();
  if (!singular) {
    const Eigen::VectorXd inv_scale = diag.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd scaled = inv_scale.asDiagonal() * a * inv_scale.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled);
    const Eigen::VectorXd ev = es.eigenvalues();
    singular = !ev.allFinite() || ev.minCoeff() <= 1e-12 * ev.maxCoeff();
    if (!singular) {
      const Eigen::MatrixXd inv = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
      res.covariance = inv_scale.asDiagonal() * inv * inv_scale.asDiagonal();
      res.covariance = 0.5 * (res.covariance + res.covariance.transpose()).eval();
    }
  }
  if (singular) {
    res.converged = false;
    res.message = "singular normal matrix";
    res.covariance = Eigen::MatrixXd::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
  }

  res.at_bound.resize(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const double scale = std::max(std::abs(p(i)), 1.0);
    res.at_bound[i] = std::abs(p(i) - spec[i].lower) <= 1e-9 * scale || std::abs(p(i) - spec[i].upper) <= 1e-9 * scale;
  }
  return res;
}

struct DataPoint
{
  double x = 0.0;
  double y = 0.0;
  double sigma = 1.0;
};

using CurveModel = std::function<double(double, const Eigen::VectorXd&)>;

/// Weighted least-squares fit of a single parametric curve y = model(x, p).
inline FitResult wls_fit(const CurveModel& model, std::span<const DataPoint> data, const std::vector<ParamSpec>& spec,
                         const Eigen::VectorXd& init, const FitOptions& opt = {})
{
  for (const auto& d : data)
    if (!std::isfinite(d.sigma) || !(d.sigma > 0.0) || !std::isfinite(d.y))
      throw FitError("wls_fit: data points need finite values and positive finite sigmas");
  if (data.size() < spec.size() + 1)
    throw FitError("wls_fit: need at least " + std::to_string(spec.size() + 1) + " points");
  const std::vector<DataPoint> pts(data.begin(), data.end());
  auto residuals = [&model, pts](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
      r(i) = (pts[i].y - model(pts[i].x, p)) / pts[i].sigma;
    return r;
  };
  return least_squares(residuals, spec, init, opt);
}

// ---------------------------------------------------------------------------
// Characterization

inline constexpr double kPulseGuard = 0.05; ///< ns; bins centred earlier are not fitted
inline constexpr double kT2StarUpper = 1000.0; ///< ns
/// DCP bins with fewer photons than this are left out of fits: the binomial
/// error estimate is unreliable there.
inline constexpr std::uint64_t kMinDcpCounts = 20;

struct CharacterizationFit
{
  FitResult fit; ///< parameters t_excited, t2_star, tau_r, i0 (counts/ns at t=0)
  double tau_r_seed = 0.0;
  bool t2_star_at_bound = false;
  bool any_at_bound = false;
  std::vector<std::string> residual_series; ///< co, cross, h or dcp, per normalized residual
  std::vector<double> residual_t;           ///< bin centre, ns

  QubitTimescales timescales() const
  {
    return {fit.value("t_excited"), fit.value("t2_star"), fit.value("tau_r"), kInf};
  }
};

namespace detail {

struct CountSeries
{
  const TimeTrace* trace;
  enum class Kind { Co, Cross, Total } kind;
};

inline double counts_of(const TimeTrace& tr, std::size_t i, CountSeries::Kind kind)
{
  switch (kind) {
  case CountSeries::Kind::Co:
  case CountSeries::Kind::Cross: return static_cast<double>(tr.counts_r[i]);
  case CountSeries::Kind::Total: return static_cast<double>(tr.counts_r[i] + tr.counts_l[i]);
  }
  return 0.0;
}

inline bool fitted_bin(double t_lo, double width) { return t_lo + 0.5 * width >= kPulseGuard; }

} // namespace detail

/// Joint fit of the co- and cross-circular intensities, the H-excitation decay and
/// the R-excitation DCP. The R excitation fixes V0 = 1, phi0 = 0 in the model.
/// Internally the dephasing enters through gamma = 1/T2*^2 so that the no-dephasing
/// limit sits on a finite bound.
inline CharacterizationFit fit_characterization(const CharacterizationTraces& traces, const DcpTrace& dcp_co,
                                                const FitOptions& opt = {})
{
  const TimeTrace& h = traces.h;
  const double bw = h.bin_width;
  if (traces.co.size() != h.size() || traces.cross.size() != h.size() || dcp_co.size() != h.size())
    throw FitError("fit_characterization: traces have different lengths");

  // Radiative lifetime seed: log-linear fit of the H-excitation decay.
  std::vector<DataPoint> log_pts;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double n = static_cast<double>(h.counts_r[i] + h.counts_l[i]);
    if (n > 0.0 && detail::fitted_bin(h.bin_start[i], bw))
      log_pts.push_back({h.bin_start[i] + 0.5 * bw, std::log(n), 1.0 / std::sqrt(n)});
  }
  if (log_pts.size() < 3)
    throw FitError("fit_characterization: H-excitation trace has fewer than 3 populated bins");
  const FitResult lin = wls_fit([](double x, const Eigen::VectorXd& p) { return p(0) + p(1) * x; }, log_pts,
                                {{"intercept"}, {"slope"}}, Eigen::Vector2d(log_pts[0].y, -1.0));
  if (!(lin.params(1) < 0.0))
    throw FitError("fit_characterization: H-excitation trace does not decay");
  const double tau_seed = -1.0 / lin.params(1);
  const double i0_seed = std::exp(lin.params(0)) / bw;

  auto timescales = [](const Eigen::VectorXd& q) {
    QubitTimescales ts;
    ts.t_excited = q(0);
    ts.t2_star = q(1) > 0.0 ? 1.0 / std::sqrt(q(1)) : kInf;
    ts.tau_r = q(2);
    return ts;
  };

  struct CountPoint
  {
    const TimeTrace* trace;
    std::size_t bin;
    detail::CountSeries::Kind kind;
  };
  std::vector<CountPoint> count_points;
  const std::array<detail::CountSeries, 3> series{{{&traces.co, detail::CountSeries::Kind::Co},
                                                   {&traces.cross, detail::CountSeries::Kind::Cross},
                                                   {&traces.h, detail::CountSeries::Kind::Total}}};
  static constexpr const char* series_names[] = {"co", "cross", "h"};
  CharacterizationFit out;
  for (std::size_t k = 0; k < series.size(); ++k)
    for (std::size_t i = 0; i < series[k].trace->size(); ++i)
      if (detail::fitted_bin(series[k].trace->bin_start[i], bw)) {
        count_points.push_back({series[k].trace, i, series[k].kind});
        out.residual_series.push_back(series_names[k]);
        out.residual_t.push_back(series[k].trace->bin_start[i] + 0.5 * bw);
      }
  std::vector<std::size_t> dcp_points;
  for (std::size_t i = 0; i < dcp_co.size(); ++i)
    if (dcp_co.included[i] && dcp_co.total[i] >= kMinDcpCounts &&
        detail::fitted_bin(dcp_co.t[i] - 0.5 * dcp_co.bin_width, dcp_co.bin_width)) {
      dcp_points.push_back(i);
      out.residual_series.push_back("dcp");
      out.residual_t.push_back(dcp_co.t[i]);
    }
  const PrecessionParams r_excitation{1.0, 0.0};

  auto residuals = [&](const Eigen::VectorXd& q, bool with_counts) {
    const QubitTimescales ts = timescales(q);
    Eigen::VectorXd r((with_counts ? count_points.size() : 0) + dcp_points.size());
    Eigen::Index k = 0;
    if (with_counts) {
      for (const auto& c : count_points) {
        const IntensityPair ip = bin_intensity(c.trace->bin_start[c.bin], bw, r_excitation, ts, q(3));
        const double model = c.kind == detail::CountSeries::Kind::Co      ? ip.r
                             : c.kind == detail::CountSeries::Kind::Cross ? ip.l
                                                                          : ip.r + ip.l;
        const double n = detail::counts_of(*c.trace, c.bin, c.kind);
        r(k++) = (n - model) / std::sqrt(std::max(n, 1.0));
      }
    }
    for (std::size_t i : dcp_points) {
      const double t_lo = dcp_co.t[i] - 0.5 * dcp_co.bin_width;
      r(k++) = (dcp_co.dcp[i] - bin_dcp(t_lo, dcp_co.bin_width, r_excitation, ts)) / dcp_co.sigma[i];
    }
    return r;
  };

  const std::vector<ParamSpec> spec{{"t_excited", 0.05, 1000.0},
                                    {"gamma", 1.0 / (kT2StarUpper * kT2StarUpper), 1e4},
                                    {"tau_r", 1e-3, 1e3},
                                    {"i0", 0.0, kInf}};

  // Precession period seed: coarse scan of the DCP misfit with weak dephasing.
  double best_t = 5.0, best_chi2 = kInf;
  for (int i = 0; i <= 400; ++i) {
    const double t = 0.5 * std::pow(200.0, i / 400.0);
    const Eigen::Vector4d q(t, 1.0 / (4.0 * t * t), tau_seed, i0_seed);
    const double c = residuals(q, false).squaredNorm();
    if (c < best_chi2) {
      best_chi2 = c;
      best_t = t;
    }
  }

  const Eigen::Vector4d init(best_t, 1.0 / (best_t * best_t), tau_seed, i0_seed);
  const FitResult inner = least_squares([&](const Eigen::VectorXd& q) { return residuals(q, true); }, spec, init, opt);

  // Report T2* instead of gamma; propagate the covariance through dT2*/dgamma.
  out.tau_r_seed = tau_seed;
  out.fit = inner;
  out.fit.names = {"t_excited", "t2_star", "tau_r", "i0"};
  const double gamma = inner.params(1);
  out.fit.params(1) = 1.0 / std::sqrt(gamma);
  Eigen::Matrix4d jac = Eigen::Matrix4d::Identity();
  jac(1, 1) = -0.5 * std::pow(gamma, -1.5);
  out.fit.covariance = jac * inner.covariance * jac.transpose();
  out.t2_star_at_bound = inner.at_bound[1];
  out.any_at_bound = inner.any_at_bound();
  return out;
}

// ---------------------------------------------------------------------------
// Tomography

struct TomographyFit
{
  FitResult fit;             ///< parameters sx, sy, sz
  BlochVector estimate;      ///< clipped to the Bloch ball
  BlochVector unclipped;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
  bool clipped = false;
  bool flat_h = false;       ///< H-conversion DCP amplitude below 3 sigma
  bool flat_b = false;
  bool degenerate = false;   ///< both curves flat
  PrecessionParams coarse_h;
  PrecessionParams coarse_b;
  HbInversion seed;          ///< closed-form inversion of the coarse single-curve fits
  std::vector<std::string> residual_series; ///< H or B, per normalized residual
  std::vector<double> residual_t;
};

struct CoarseCurveFit
{
  PrecessionParams params;
  double v0_sigma = 0.0;
};

namespace detail {

struct DcpPoint
{
  double t_lo;
  double width;
  double dcp;
  double sigma;
};

inline std::vector<DcpPoint> fitted_points(const DcpTrace& d)
{
  std::vector<DcpPoint> pts;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double t_lo = d.t[i] - 0.5 * d.bin_width;
    if (d.included[i] && d.total[i] >= kMinDcpCounts && fitted_bin(t_lo, d.bin_width))
      pts.push_back({t_lo, d.bin_width, d.dcp[i], d.sigma[i]});
  }
  return pts;
}

} // namespace detail

/// Single-curve (V0, phi0) fit with the timescales held fixed. The bin-averaged
/// DCP is linear in (V0 cos phi0, V0 sin phi0), which gives a closed-form seed.
inline CoarseCurveFit fit_precession_curve(const DcpTrace& d, const QubitTimescales& ts, const FitOptions& opt = {})
{
  const auto pts = detail::fitted_points(d);
  if (pts.size() < 3)
    throw FitError("fit_precession_curve: fewer than 3 usable DCP bins");

  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector2d basis(bin_dcp(p.t_lo, p.width, {1.0, 0.0}, ts),
                                bin_dcp(p.t_lo, p.width, {1.0, std::numbers::pi / 2}, ts));
    const double w = 1.0 / (p.sigma * p.sigma);
    a += w * basis * basis.transpose();
    b += w * p.dcp * basis;
  }
  const Eigen::Vector2d cs = a.ldlt().solve(b);
  const double v_seed = std::hypot(cs(0), cs(1));

  CoarseCurveFit out;
  if (v_seed < kDegeneratePhaseTol) {
    out.params = {0.0, 0.0, false};
    const Eigen::Matrix2d cov = a.inverse();
    out.v0_sigma = std::sqrt(0.5 * cov.trace());
    return out;
  }

  std::vector<DataPoint> data;
  for (std::size_t i = 0; i < pts.size(); ++i)
    data.push_back({static_cast<double>(i), pts[i].dcp, pts[i].sigma});
  auto model = [&pts, &ts](double x, const Eigen::VectorXd& q) {
    const auto& p = pts[static_cast<std::size_t>(x)];
    return bin_dcp(p.t_lo, p.width, {q(0), q(1)}, ts);
  };
  const FitResult r = wls_fit(model, data, {{"v0", 0.0, kInf}, {"phi0", -kInf, kInf, true}},
                              Eigen::Vector2d(v_seed, std::atan2(cs(1), cs(0))), opt);
  out.params = {r.params(0), wrap_phase(r.params(1)), r.params(0) >= kDegeneratePhaseTol};
  out.v0_sigma = std::sqrt(std::max(r.covariance(0, 0), 0.0));
  if (!std::isfinite(out.v0_sigma))
    out.v0_sigma = std::sqrt(0.5 * a.inverse().trace());
  return out;
}

/// Simultaneous fit of the H- and B-conversion DCP curves with the ground-state
/// Bloch vector as the only free parameters.
inline TomographyFit fit_tomography(const DcpTrace& dcp_h, const DcpTrace& dcp_b, const QubitTimescales& ts,
                                    const FitOptions& opt = {})
{
  ts.validate();
  TomographyFit out;
  const CoarseCurveFit ch = fit_precession_curve(dcp_h, ts, opt);
  const CoarseCurveFit cb = fit_precession_curve(dcp_b, ts, opt);
  out.coarse_h = ch.params;
  out.coarse_b = cb.params;
  out.seed = invert_hb(ch.params, cb.params);
  out.flat_h = ch.params.v0 < 3.0 * ch.v0_sigma;
  out.flat_b = cb.params.v0 < 3.0 * cb.v0_sigma;

  const auto ph = detail::fitted_points(dcp_h);
  const auto pb = detail::fitted_points(dcp_b);
  for (const auto& p : ph) {
    out.residual_series.push_back("H");
    out.residual_t.push_back(p.t_lo + 0.5 * p.width);
  }
  for (const auto& p : pb) {
    out.residual_series.push_back("B");
    out.residual_t.push_back(p.t_lo + 0.5 * p.width);
  }
  auto residuals = [&](const Eigen::VectorXd& q) {
    const BlochVector s{q(0), q(1), q(2)};
    const PrecessionParams h = precession_params(convert_pulse(s, PulsePolarization::H));
    const PrecessionParams b = precession_params(convert_pulse(s, PulsePolarization::B));
    Eigen::VectorXd r(ph.size() + pb.size());
    Eigen::Index k = 0;
    for (const auto& p : ph)
      r(k++) = (p.dcp - bin_dcp(p.t_lo, p.width, h, ts)) / p.sigma;
    for (const auto& p : pb)
      r(k++) = (p.dcp - bin_dcp(p.t_lo, p.width, b, ts)) / p.sigma;
    return r;
  };
  out.fit = least_squares(residuals, {{"sx"}, {"sy"}, {"sz"}}, out.seed.s.vec(), opt);
  out.unclipped = BlochVector::from(out.fit.params);
  out.covariance = out.fit.covariance;
  out.estimate = clip_to_ball(out.unclipped);
  out.clipped = out.unclipped.norm() > 1.0;

  if (out.flat_h && out.flat_b) {
    // Only the X projection is constrained; report the state on the X axis.
    out.degenerate = true;
    out.estimate.sy = 0.0;
    out.estimate.sz = 0.0;
    const double widen = std::pow(3.0 * std::max(ch.v0_sigma, cb.v0_sigma), 2);
    out.covariance(1, 1) = std::max(out.covariance(1, 1), widen);
    out.covariance(2, 2) = std::max(out.covariance(2, 2), widen);
  }
  return out;
}

} // namespace pitomo

#endif
