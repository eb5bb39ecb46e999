// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pitomo/pipeline.hpp"

using namespace pitomo;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int n, bool ok, const std::string& title, const std::string& detail)
{
  std::printf("[%s] criterion %d: %s | %s\n", ok ? "PASS" : "FAIL", n, title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok)
    ++failures;
}

std::string fmt(const char* f, double a)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const QubitTimescales kTrue{5.70, 5.75, 0.39};
const unsigned kThreads = default_thread_count();

BlochVector random_ball(std::mt19937_64& eng)
{
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Eigen::Vector3d v(n(eng), n(eng), n(eng));
  return BlochVector::from(v.normalized() * std::cbrt(u(eng)));
}

DcpTrace noiseless_dcp(const BlochVector& s, PulsePolarization pol, const QubitTimescales& ts)
{
  const SimConfig cfg;
  const PrecessionParams p = precession_params(convert_pulse(s, pol));
  DcpTrace d;
  d.bin_width = cfg.bin_width;
  for (std::size_t i = 0; i < cfg.n_bins(); ++i) {
    const double t_lo = static_cast<double>(i) * cfg.bin_width;
    d.t.push_back(t_lo + 0.5 * cfg.bin_width);
    d.dcp.push_back(bin_dcp(t_lo, cfg.bin_width, p, ts));
    d.sigma.push_back(0.01);
    d.included.push_back(true);
    d.total.push_back(1'000'000);
  }
  return d;
}

// ---------------------------------------------------------------------------

void characterization_round_trip()
{
  const auto t0 = Clock::now();
  SimConfig cfg;
  cfg.n_cycles = 10'000'000;
  cfg.analyzer_error = 0.0;
  const CharacterizationTraces tr = simulate_characterization(kTrue, cfg);
  const CharacterizationFit c = fit_characterization(tr, dcp_from_trace(tr.co));
  const double secs = seconds_since(t0);

  const double e_t = std::abs(c.fit.value("t_excited") / kTrue.t_excited - 1.0);
  const double e_t2 = std::abs(c.fit.value("t2_star") / kTrue.t2_star - 1.0);
  const double e_tau = std::abs(c.fit.value("tau_r") / kTrue.tau_r - 1.0);
  const Eigen::VectorXd& r = c.fit.normalized_residuals;
  const double within = (r.array().abs() <= 2.0).cast<double>().mean();
  const bool ok = c.fit.converged && e_t <= 0.02 && e_t2 <= 0.02 && e_tau <= 0.02 && within >= 0.90 && secs < 60.0;
  report(1, ok, "characterization round-trip",
         "T_excited " + fmt("%.4f", c.fit.value("t_excited")) + " (" + fmt("%.2f%%", 100 * e_t) + "), T2* " +
             fmt("%.4f", c.fit.value("t2_star")) + " (" + fmt("%.2f%%", 100 * e_t2) + "), tau_R " +
             fmt("%.4f", c.fit.value("tau_r")) + " (" + fmt("%.2f%%", 100 * e_tau) + "), |residual|<=2: " +
             fmt("%.1f%%", 100 * within) + ", " + fmt("%.2f s", secs));
}

void tomography_round_trip()
{
  const auto t0 = Clock::now();
  const int seeds = 20;
  RunConfig cfg;
  std::vector<Eigen::Vector3d> abs_err(cfg.initializations.size(), Eigen::Vector3d::Zero());
  std::vector<Eigen::Vector3d> mean_est(cfg.initializations.size(), Eigen::Vector3d::Zero());
  double worst_single = 0.0;
  for (int seed = 1; seed <= seeds; ++seed) {
    cfg.sim.seed = static_cast<std::uint64_t>(seed);
    const TraceSet set = simulate_all(cfg, kThreads);
    const auto& ch = set.characterization;
    const QubitTimescales ts = fit_characterization(ch, dcp_from_trace(ch.co)).timescales();
    const auto states = tomograph_all(set.tomography, cfg, ts, kThreads);
    for (std::size_t i = 0; i < states.size(); ++i) {
      const Eigen::Vector3d err = states[i].fit.estimate.vec() - states[i].init_bloch.vec();
      abs_err[i] += err.cwiseAbs() / seeds;
      mean_est[i] += err / seeds;
      worst_single = std::max(worst_single, err.cwiseAbs().maxCoeff());
    }
  }
  const double secs = seconds_since(t0);
  double worst_mae = 0.0, worst_bias = 0.0;
  for (std::size_t i = 0; i < abs_err.size(); ++i) {
    worst_mae = std::max(worst_mae, abs_err[i].maxCoeff());
    worst_bias = std::max(worst_bias, mean_est[i].cwiseAbs().maxCoeff());
  }
  const bool ok = worst_mae <= 0.03 && secs < 300.0;
  report(2, ok, "tomography round-trip",
         "20 seeds x 6 states, fitted timescales: worst mean |error| " + fmt("%.4f", worst_mae) + ", worst mean error " +
             fmt("%.4f", worst_bias) + ", worst single error " + fmt("%.4f", worst_single) + " (limit 0.03), " +
             fmt("%.1f s", secs));
}

void map_identity()
{
  RunConfig cfg;
  const ExperimentResult r = run_experiment(cfg, kThreads);

  std::vector<StatePair> pairs;
  for (const auto& init : cfg.initializations) {
    const DensityMatrix2 rho = build_init_density(init.direction, cfg.polarization_degree);
    pairs.push_back({rho, rho, 1.0});
  }
  const double dev = (fit_map(pairs).map - TransferMatrix4::Identity()).cwiseAbs().maxCoeff();
  const bool ok = r.fidelity >= 0.99 && dev <= 1e-9;
  report(3, ok, "map identity check",
         "pipeline fidelity at eps=0 " + fmt("%.5f", r.fidelity) + " (>= 0.99), identity pairs max deviation " +
             fmt("%.1e", dev) + " (<= 1e-9)");
}

double mean_fidelity(double eps_deg, int seeds)
{
  RunConfig cfg;
  cfg.sim.analyzer_error = eps_deg * std::numbers::pi / 180.0;
  double acc = 0.0;
  for (int seed = 1; seed <= seeds; ++seed) {
    cfg.sim.seed = static_cast<std::uint64_t>(seed);
    acc += run_experiment(cfg, kThreads).fidelity;
  }
  return acc / seeds;
}

void fidelity_bracket()
{
  const int seeds = 20;
  std::string scan;
  bool bracket = false;
  double closest = 0.0;
  for (double eps = 2.0; eps <= 5.0 + 1e-9; eps += 0.25) {
    const double f = mean_fidelity(eps, seeds);
    if (std::abs(f - 0.94) < std::abs(closest - 0.94))
      closest = f;
    bracket = bracket || (f >= 0.92 && f <= 0.96);
    if (std::fmod(eps, 1.0) == 0.0)
      scan += fmt("%.0f deg ", eps) + fmt("%.4f, ", f);
  }
  std::string mono;
  bool monotone = true;
  double last = 2.0;
  for (double eps : {0.0, 1.0, 2.0, 4.0, 8.0}) {
    const double f = mean_fidelity(eps, seeds);
    monotone = monotone && f <= last;
    last = f;
    mono += fmt("%.0f:", eps) + fmt("%.4f ", f);
  }
  report(4, bracket && monotone, "target fidelity bracketing",
         std::string("eps in [2,5] deg with mean F in [0.92,0.96]: ") + (bracket ? "found" : "none") + " (" + scan +
             "closest " + fmt("%.4f", closest) + "); monotone over {0,1,2,4,8} deg: " + (monotone ? "yes" : "no") +
             " (" + mono + ")");
}

void analytic_identities()
{
  double worst_sum = 0.0, worst_ratio = 0.0, worst_b4 = 0.0, worst_rl = 0.0, worst_round = 0.0;
  std::mt19937_64 eng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const BlochVector s = random_ball(eng);
    const PrecessionParams p = precession_params(convert_pulse(s, PulsePolarization::H));
    const double t = 8.0 * u(eng), i0 = 0.5 + u(eng);
    const IntensityPair ip = intensity_pair(t, p, kTrue, i0);
    const double expo = i0 * std::exp(-t / kTrue.tau_r);
    worst_sum = std::max(worst_sum, std::abs(ip.r + ip.l - expo) / expo);
    worst_ratio = std::max(worst_ratio, std::abs((ip.r - ip.l) / (ip.r + ip.l) - dcp_model(t, p, kTrue)));

    BlochVector b = s;
    for (int i = 0; i < 4; ++i)
      b = convert_pulse(b, PulsePolarization::B);
    worst_b4 = std::max(worst_b4, (b - s).norm());
    worst_rl = std::max({worst_rl, (convert_pulse(s, PulsePolarization::R) - BlochVector{0, 0, 1}).norm(),
                         (convert_pulse(s, PulsePolarization::L) - BlochVector{0, 0, -1}).norm()});

    const HbInversion inv = invert_hb(p, precession_params(convert_pulse(s, PulsePolarization::B)));
    worst_round = std::max({worst_round, (inv.s - s).vec().cwiseAbs().maxCoeff(), inv.residual});
  }
  const double worst = std::max({worst_sum, worst_ratio, worst_b4, worst_rl, worst_round});
  report(5, worst <= 1e-12, "analytic identities",
         "1000 random states: sum vs exponential " + fmt("%.1e", worst_sum) + ", DCP ratio " + fmt("%.1e", worst_ratio) +
             ", B^4 " + fmt("%.1e", worst_b4) + ", R/L constant " + fmt("%.1e", worst_rl) + ", H/B inversion " +
             fmt("%.1e", worst_round) + " (<= 1e-12)");
}

void oracle_equivalence()
{
  std::mt19937_64 eng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  double worst_tomo = 0.0;
  for (int k = 0; k < 50; ++k) {
    BlochVector s = random_ball(eng);
    const HbInversion oracle = invert_hb(precession_params(convert_pulse(s, PulsePolarization::H)),
                                         precession_params(convert_pulse(s, PulsePolarization::B)));
    const TomographyFit f =
        fit_tomography(noiseless_dcp(s, PulsePolarization::H, kTrue), noiseless_dcp(s, PulsePolarization::B, kTrue),
                       kTrue);
    worst_tomo = std::max(worst_tomo, (f.unclipped - oracle.s).vec().cwiseAbs().maxCoeff());
  }

  double worst_wls = 0.0;
  std::normal_distribution<double> n;
  for (int k = 0; k < 20; ++k) {
    std::vector<DataPoint> pts;
    for (int i = 0; i < 50; ++i) {
      const double x = 0.2 * i, sigma = 0.1 + u(eng);
      pts.push_back({x, 0.3 + 1.7 * x + sigma * n(eng), sigma});
    }
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& p : pts) {
      const double w = 1 / (p.sigma * p.sigma);
      sw += w, sx += w * p.x, sy += w * p.y, sxx += w * p.x * p.x, sxy += w * p.x * p.y;
    }
    const double det = sw * sxx - sx * sx;
    const Eigen::Vector2d closed((sxx * sy - sx * sxy) / det, (sw * sxy - sx * sy) / det);
    const FitResult r = wls_fit([](double x, const Eigen::VectorXd& p) { return p(0) + p(1) * x; }, pts,
                                {{"a"}, {"b"}}, Eigen::Vector2d(0.0, 0.0));
    worst_wls = std::max(worst_wls, (r.params - closed).cwiseAbs().maxCoeff());
  }

  double worst_fid = 0.0;
  for (double lambda = -1.0 / 3.0; lambda <= 1.0 + 1e-12; lambda += 1.0 / 30.0)
    worst_fid = std::max(worst_fid, std::abs(process_fidelity(depolarizing_map(std::min(lambda, 1.0)),
                                                              TransferMatrix4::Identity()) -
                                             (1 + 3 * std::min(lambda, 1.0)) / 4));

  const bool ok = worst_tomo <= 1e-6 && worst_wls <= 1e-10 && worst_fid <= 1e-9;
  report(6, ok, "oracle equivalence",
         "noiseless tomography vs closed-form inversion " + fmt("%.1e", worst_tomo) + " (<= 1e-6), weighted fit vs " +
             "closed-form regression " + fmt("%.1e", worst_wls) + " (<= 1e-10), depolarizing fidelity " +
             fmt("%.1e", worst_fid) + " (<= 1e-9)");
}

struct TomographySample
{
  Eigen::Vector3d err;
  Eigen::Vector3d sigma;
};

std::vector<std::vector<TomographySample>> tomography_samples(std::uint64_t n_cycles, int seeds)
{
  RunConfig cfg;
  cfg.sim.n_cycles = n_cycles;
  std::vector<std::vector<TomographySample>> out(cfg.initializations.size());
  for (int seed = 1; seed <= seeds; ++seed) {
    cfg.sim.seed = static_cast<std::uint64_t>(seed);
    const TraceSet set = simulate_all(cfg, kThreads);
    const auto states = tomograph_all(set.tomography, cfg, cfg.timescales, kThreads);
    for (std::size_t i = 0; i < states.size(); ++i)
      out[i].push_back({states[i].fit.estimate.vec() - states[i].init_bloch.vec(),
                        states[i].fit.covariance.diagonal().cwiseSqrt()});
  }
  return out;
}

void statistical_calibration()
{
  const auto samples = tomography_samples(10'000'000, 100);
  double lo = 1e9, hi = 0.0;
  for (const auto& state : samples)
    for (int c = 0; c < 3; ++c) {
      double m = 0.0, m2 = 0.0;
      for (const auto& s : state) {
        const double pull = s.err(c) / s.sigma(c);
        m += pull;
        m2 += pull * pull;
      }
      m /= state.size();
      const double sd = std::sqrt((m2 - state.size() * m * m) / (state.size() - 1));
      lo = std::min(lo, sd);
      hi = std::max(hi, sd);
    }
  const bool pulls_ok = lo >= 0.8 && hi <= 1.25;

  std::vector<double> rms;
  std::string rms_text;
  for (std::uint64_t n : {100'000ULL, 1'000'000ULL, 10'000'000ULL}) {
    const auto s = tomography_samples(n, 50);
    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& state : s)
      for (const auto& x : state) {
        acc += x.err.squaredNorm();
        count += 3;
      }
    rms.push_back(std::sqrt(acc / count));
    rms_text += fmt("%.0e:", static_cast<double>(n)) + fmt("%.2e ", rms.back());
  }
  bool scale_ok = true;
  std::string ratios;
  for (std::size_t i = 1; i < rms.size(); ++i) {
    const double ratio = rms[i - 1] / rms[i] / std::sqrt(10.0);
    scale_ok = scale_ok && ratio >= 1.0 / 1.5 && ratio <= 1.5;
    ratios += fmt("%.3f ", ratio);
  }
  report(7, pulls_ok && scale_ok, "statistical calibration",
         "pull sd over 100 seeds, 18 state components: [" + fmt("%.3f", lo) + ", " + fmt("%.3f", hi) +
             "] (within [0.8, 1.25]); RMS " + rms_text + "ratio to 1/sqrt(n) per decade " + ratios +
             "(within factor 1.5)");
}

} // namespace

int main()
{
  const auto t0 = Clock::now();
  characterization_round_trip();
  tomography_round_trip();
  map_identity();
  fidelity_bracket();
  analytic_identities();
  oracle_equivalence();
  statistical_calibration();
  std::printf("%d of 7 criteria passed (%.1f s)\n", 7 - failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
