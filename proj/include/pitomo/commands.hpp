#ifndef PITOMO_COMMANDS_HPP
#define PITOMO_COMMANDS_HPP

// The five CLI verbs as library functions, so tests can drive them without a
// subprocess. Each reads and writes files in a run directory.

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "pitomo/io.hpp"

namespace pitomo::cli {

namespace fs = std::filesystem;

enum ExitCode : int
{
  kExitOk = 0,
  kExitUnexpected = 1,
  kExitConfig = 2,
  kExitNonConvergence = 3,
  kExitPhysicality = 4,
  kExitIo = 5,
};

struct Options
{
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  unsigned threads = default_thread_count();
  std::optional<fs::path> out; ///< defaults to the config's output_dir
  std::optional<fs::path> in;  ///< defaults to the output directory
};

inline const char* kManifestFile = "simulate.json";
inline const char* kCharacterizationFile = "characterization.json";
inline const char* kTomographyFile = "tomography.json";
inline const char* kMapFile = "map.json";
inline const char* kSummaryFile = "summary.json";

/// Resolved inputs of one command invocation.
struct Context
{
  RunConfig config;
  fs::path in;
  fs::path out;
  unsigned threads = 1;
};

inline json read_json_file(const fs::path& path)
{
  return parse_json_text(read_text_file(path), path.string());
}

inline void write_json_file(const fs::path& path, const json& j)
{
  write_text_file(path, j.dump(2) + "\n");
}

inline fs::path prepare_dir(const fs::path& dir)
{
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw IoError("cannot create output directory '" + dir.string() + "'" + (ec ? ": " + ec.message() : ""));
  return dir;
}

/// Config precedence: --config file, else the config echoed in the input
/// directory's simulation manifest (if present), else the built-in defaults.
/// --seed overrides sim.seed; --out (else --in) overrides output_dir.
inline Context resolve(const Options& opt, bool read_manifest)
{
  Context ctx;
  ctx.threads = std::max(1u, opt.threads);
  if (opt.config) {
    ctx.config = load_run_config(*opt.config);
  } else if (read_manifest) {
    const fs::path dir = opt.in ? *opt.in : (opt.out ? *opt.out : fs::path(ctx.config.output_dir));
    const fs::path manifest = dir / kManifestFile;
    if (fs::exists(manifest)) {
      const json rec = read_json_file(manifest);
      check_record(rec, "simulate", manifest.string());
      ctx.config = run_config_from_json(rec.at("config"));
    }
  }
  if (opt.seed)
    ctx.config.sim.seed = *opt.seed;
  if (opt.out)
    ctx.config.output_dir = opt.out->string();
  else if (opt.in)
    ctx.config.output_dir = opt.in->string();
  ctx.config.validate();
  ctx.out = ctx.config.output_dir;
  ctx.in = opt.in ? *opt.in : ctx.out;
  return ctx;
}

/// The trace-set id the input directory was simulated with.
inline std::string input_trace_set_id(const Context& ctx)
{
  const fs::path manifest = ctx.in / kManifestFile;
  if (!fs::exists(manifest))
    return trace_set_id(ctx.config);
  const json rec = read_json_file(manifest);
  check_record(rec, "simulate", manifest.string());
  return rec.at("trace_set_id").get<std::string>();
}

inline std::string fmt(double v, int precision = 4)
{
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

// ---------------------------------------------------------------------------

inline int cmd_simulate(const Context& ctx, std::ostream& log)
{
  const TraceSet set = simulate_all(ctx.config, ctx.threads);
  prepare_dir(ctx.out);
  json files = json::array();
  auto emit = [&](const std::string& name, const TimeTrace& tr) {
    write_trace(ctx.out / (name + ".csv"), tr);
    files.push_back(name + ".csv");
  };
  emit("char_co", set.characterization.co);
  emit("char_cross", set.characterization.cross);
  emit("char_h", set.characterization.h);
  for (const auto& t : set.tomography) {
    emit(tomography_stream(t.label, PulsePolarization::H), t.h);
    emit(tomography_stream(t.label, PulsePolarization::B), t.b);
  }
  json rec = make_record("simulate", ctx.config);
  rec["trace_set_id"] = trace_set_id(ctx.config);
  rec["result"] = {{"files", files}, {"n_bins", ctx.config.sim.n_bins()}};
  write_json_file(ctx.out / kManifestFile, rec);
  log << "simulate: wrote " << files.size() << " trace files to " << ctx.out.string() << "\n";
  return kExitOk;
}

inline int cmd_characterize(const Context& ctx, std::ostream& log)
{
  CharacterizationTraces tr;
  tr.co = read_trace(ctx.in / "char_co.csv");
  tr.cross = read_trace(ctx.in / "char_cross.csv");
  tr.h = read_trace(ctx.in / "char_h.csv");
  const CharacterizationFit fit = fit_characterization(tr, dcp_from_trace(tr.co));

  prepare_dir(ctx.out);
  std::ostringstream csv;
  csv << "series,t_ns,normalized_residual\n";
  for (Eigen::Index i = 0; i < fit.fit.normalized_residuals.size(); ++i)
    csv << fit.residual_series[i] << ',' << fmt(fit.residual_t[i], 6) << ','
        << std::setprecision(10) << fit.fit.normalized_residuals(i) << '\n';
  write_text_file(ctx.out / "characterization_residuals.csv", csv.str());

  json rec = make_record("characterize", ctx.config);
  rec["trace_set_id"] = input_trace_set_id(ctx);
  rec["result"] = to_json(fit);
  write_json_file(ctx.out / kCharacterizationFile, rec);

  log << "characterize: T_excited=" << fmt(fit.fit.value("t_excited")) << " ns  T2*="
      << fmt(fit.fit.value("t2_star")) << " ns  tau_R=" << fmt(fit.fit.value("tau_r"))
      << " ns  reduced_chi2=" << fmt(fit.fit.reduced_chi2, 3) << "\n";
  if (fit.any_at_bound)
    log << "characterize: warning: a parameter sits at its bound" << (fit.t2_star_at_bound ? " (T2*)" : "") << "\n";
  if (!fit.fit.converged) {
    log << "characterize: fit did not converge: " << fit.fit.message << "\n";
    return kExitNonConvergence;
  }
  return kExitOk;
}

inline int cmd_tomo(const Context& ctx, std::ostream& log)
{
  const fs::path char_path = ctx.in / kCharacterizationFile;
  const json char_rec = read_json_file(char_path);
  check_record(char_rec, "characterize", char_path.string());
  const std::string id = input_trace_set_id(ctx);
  if (char_rec.value("trace_set_id", std::string()) != id)
    throw ConfigError(char_path.string() + ": characterization was fitted on trace set '" +
                      char_rec.value("trace_set_id", std::string()) + "', but the traces in '" + ctx.in.string() +
                      "' are trace set '" + id + "'");
  const QubitTimescales ts = timescales_from_record(char_rec, char_path.string());

  std::vector<TomographyTraces> traces;
  for (const auto& init : ctx.config.initializations) {
    TomographyTraces t;
    t.label = init.label;
    t.h = read_trace(ctx.in / (tomography_stream(init.label, PulsePolarization::H) + ".csv"));
    t.b = read_trace(ctx.in / (tomography_stream(init.label, PulsePolarization::B) + ".csv"));
    traces.push_back(std::move(t));
  }
  const std::vector<StateTomography> states = tomograph_all(traces, ctx.config, ts, ctx.threads);

  prepare_dir(ctx.out);
  std::ostringstream csv;
  csv << "state,series,t_ns,normalized_residual\n";
  json arr = json::array();
  bool all_converged = true;
  for (const auto& s : states) {
    arr.push_back(to_json(s));
    all_converged = all_converged && s.fit.fit.converged;
    for (Eigen::Index i = 0; i < s.fit.fit.normalized_residuals.size(); ++i)
      csv << s.label << ',' << s.fit.residual_series[i] << ',' << fmt(s.fit.residual_t[i], 6) << ','
          << std::setprecision(10) << s.fit.fit.normalized_residuals(i) << '\n';
  }
  write_text_file(ctx.out / "tomography_residuals.csv", csv.str());

  json rec = make_record("tomo", ctx.config);
  rec["trace_set_id"] = id;
  rec["result"] = {{"timescales", char_rec.at("result").at("values")}, {"states", arr}};
  write_json_file(ctx.out / kTomographyFile, rec);

  for (const auto& s : states) {
    log << "tomo: " << std::setw(4) << s.label << "  S=[" << fmt(s.fit.estimate.sx) << ", " << fmt(s.fit.estimate.sy)
        << ", " << fmt(s.fit.estimate.sz) << "]";
    if (s.fit.degenerate)
      log << "  (flat curves)";
    if (s.fit.clipped)
      log << "  (clipped)";
    if (!s.fit.seed.consistent)
      log << "  (H/B inconsistent)";
    log << "\n";
  }
  if (!all_converged) {
    log << "tomo: at least one state fit did not converge\n";
    return kExitNonConvergence;
  }
  return kExitOk;
}

struct MapOutcome
{
  MapFit fit;
  double fidelity = 0.0;
  BootstrapResult bootstrap;
};

inline MapOutcome reconstruct_map(const std::vector<MeasuredState>& states, const RunConfig& cfg, unsigned threads)
{
  std::vector<StatePair> pairs;
  std::vector<Eigen::Matrix3d> covs;
  for (const auto& s : states) {
    if (std::abs(s.direction.norm() - 1.0) > kPhysicalTol)
      throw ConfigError("state '" + s.label + "': direction is not a unit vector");
    // tomography clips its estimates, so anything outside the ball is corrupt input
    if (!s.estimate.is_physical())
      throw PhysicalityError("state '" + s.label + "': measured Bloch vector has norm " +
                             std::to_string(s.estimate.norm()) + " > 1");
    pairs.push_back({build_init_density(s.direction, cfg.polarization_degree), bloch_to_density(s.estimate),
                     pair_weight(s.covariance)});
    covs.push_back(s.covariance);
  }
  MapOutcome out;
  out.fit = fit_map(pairs);
  out.fidelity = process_fidelity(out.fit.map, TransferMatrix4::Identity());
  out.bootstrap = bootstrap_fidelity(pairs, covs, TransferMatrix4::Identity(), cfg.bootstrap_resamples,
                                     derive_seed(cfg.sim.seed, "bootstrap"), threads);
  return out;
}

inline int cmd_map(const Context& ctx, std::ostream& log)
{
  const fs::path tomo_path = ctx.in / kTomographyFile;
  const json tomo_rec = read_json_file(tomo_path);
  check_record(tomo_rec, "tomo", tomo_path.string());
  const MapOutcome m = reconstruct_map(measured_states_from_record(tomo_rec, tomo_path.string()), ctx.config,
                                       ctx.threads);

  prepare_dir(ctx.out);
  json rec = make_record("map", ctx.config);
  rec["trace_set_id"] = tomo_rec.value("trace_set_id", std::string());
  rec["result"] = {{"basis", "pauli_transfer"},
                   {"transfer_matrix", detail::to_json(m.fit.map)},
                   {"unconstrained", detail::to_json(m.fit.unconstrained)},
                   {"projection_iterations", m.fit.projection_iterations},
                   {"projection_converged", m.fit.projection_converged},
                   {"min_choi_eigenvalue", m.fit.min_choi_eigenvalue},
                   {"fidelity", m.fidelity},
                   {"fidelity_sigma", m.bootstrap.stddev},
                   {"bootstrap_mean", m.bootstrap.mean},
                   {"bootstrap_resamples", m.bootstrap.samples.size()}};
  write_json_file(ctx.out / kMapFile, rec);

  log << "map: transfer matrix (rows 1, X, Y, Z)\n";
  for (int i = 0; i < 4; ++i) {
    log << "  ";
    for (int j = 0; j < 4; ++j)
      log << std::setw(9) << fmt(m.fit.map(i, j)) << (j < 3 ? " " : "\n");
  }
  log << "map: fidelity to identity " << fmt(m.fidelity) << " +/- " << fmt(m.bootstrap.stddev) << "\n";
  if (!m.fit.projection_converged)
    log << "map: warning: projection hit the iteration cap\n";
  return kExitOk;
}

inline int cmd_pipeline(const Context& ctx, std::ostream& log)
{
  Context stage = ctx;
  stage.in = ctx.out;
  for (auto* step : {&cmd_simulate, &cmd_characterize, &cmd_tomo, &cmd_map}) {
    const int code = step(stage, log);
    if (code != kExitOk)
      return code;
  }

  const json ch = read_json_file(ctx.out / kCharacterizationFile).at("result");
  const json tomo = read_json_file(ctx.out / kTomographyFile).at("result");
  const json map = read_json_file(ctx.out / kMapFile).at("result");

  log << "\nsummary\n";
  log << "  quantity        fitted      sigma       true\n";
  const QubitTimescales& truth = ctx.config.timescales;
  const std::pair<const char*, double> rows[] = {
      {"t_excited", truth.t_excited}, {"t2_star", truth.t2_star}, {"tau_r", truth.tau_r}};
  for (const auto& [name, value] : rows)
    log << "  " << std::left << std::setw(12) << name << std::right << std::setw(10)
        << fmt(ch.at("values").at(name).get<double>()) << std::setw(11)
        << fmt(detail::double_or_nan(ch.at("sigmas").at(name))) << std::setw(11) << fmt(value) << "\n";
  log << "  state        sx       sy       sz    true sx  true sy  true sz\n";
  for (const auto& s : tomo.at("states")) {
    log << "  " << std::left << std::setw(6) << s.at("label").get<std::string>() << std::right;
    for (int k = 0; k < 3; ++k)
      log << std::setw(9) << fmt(s.at("estimate")[k].get<double>());
    const BlochVector written = detail::bloch_from_json(s.at("direction"), "direction");
    Initialization init{"", written};
    const BlochVector t = ctx.config.state_at_conversion(init);
    log << std::setw(9) << fmt(t.sx) << std::setw(9) << fmt(t.sy) << std::setw(9) << fmt(t.sz) << "\n";
  }
  log << "  process fidelity " << fmt(map.at("fidelity").get<double>()) << " +/- "
      << fmt(map.at("fidelity_sigma").get<double>()) << "\n";

  json rec = make_record("pipeline", ctx.config);
  rec["trace_set_id"] = trace_set_id(ctx.config);
  rec["result"] = {{"characterization", ch.at("values")},
                   {"characterization_sigmas", ch.at("sigmas")},
                   {"states", tomo.at("states")},
                   {"transfer_matrix", map.at("transfer_matrix")},
                   {"fidelity", map.at("fidelity")},
                   {"fidelity_sigma", map.at("fidelity_sigma")}};
  write_json_file(ctx.out / kSummaryFile, rec);
  return kExitOk;
}

/// Runs `fn` and maps library errors onto exit codes.
template <class Fn>
int guarded(Fn&& fn, std::ostream& err)
{
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const RankDeficiencyError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FitError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNonConvergence;
  } catch (const PhysicalityError& e) {
    err << "error: " << e.what() << "\n";
    return kExitPhysicality;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUnexpected;
  }
}

inline int run_command(const std::string& verb, const Options& opt, std::ostream& log, std::ostream& err)
{
  return guarded(
      [&] {
        const bool from_manifest = verb != "simulate" && verb != "pipeline";
        const Context ctx = resolve(opt, from_manifest);
        if (verb == "simulate")
          return cmd_simulate(ctx, log);
        if (verb == "characterize")
          return cmd_characterize(ctx, log);
        if (verb == "tomo")
          return cmd_tomo(ctx, log);
        if (verb == "map")
          return cmd_map(ctx, log);
        if (verb == "pipeline")
          return cmd_pipeline(ctx, log);
        throw ConfigError("unknown command '" + verb + "'");
      },
      err);
}

} // namespace pitomo::cli

#endif
