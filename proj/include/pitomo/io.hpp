#ifndef PITOMO_IO_HPP
#define PITOMO_IO_HPP

// File formats: JSON run configuration, trace CSV files and JSON result
// records (each with an explicit schema_version).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pitomo/pipeline.hpp"

namespace pitomo {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kTraceCsvHeader = "t_ns,counts_r,counts_l";

// ---------------------------------------------------------------------------
// Small JSON helpers

namespace detail {

/// Reads the members of one JSON object, reporting errors with the dotted
/// field path and rejecting members nobody asked for.
class FieldReader
{
public:
  FieldReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path))
  {
    if (!obj_.is_object())
      throw ConfigError(where("") + ": expected an object");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const json* child(const std::string& key)
  {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  void number(const std::string& key, double& out)
  {
    if (const json* v = child(key)) {
      if (!v->is_number())
        throw ConfigError(where(key) + ": expected a number");
      out = v->get<double>();
    }
  }

  /// null stands for infinity.
  void number_or_inf(const std::string& key, double& out)
  {
    if (const json* v = child(key)) {
      if (v->is_null())
        out = std::numeric_limits<double>::infinity();
      else if (v->is_number())
        out = v->get<double>();
      else
        throw ConfigError(where(key) + ": expected a number or null");
    }
  }

  void count(const std::string& key, std::uint64_t& out)
  {
    if (const json* v = child(key)) {
      if (v->is_number_unsigned())
        out = v->get<std::uint64_t>();
      else if (v->is_number_float() && v->get<double>() >= 0.0 && std::floor(v->get<double>()) == v->get<double>() &&
               v->get<double>() < 1.8e19)
        out = static_cast<std::uint64_t>(v->get<double>());
      else
        throw ConfigError(where(key) + ": expected a non-negative integer");
    }
  }

  void integer(const std::string& key, int& out)
  {
    if (const json* v = child(key)) {
      if (!v->is_number_integer())
        throw ConfigError(where(key) + ": expected an integer");
      out = v->get<int>();
    }
  }

  void boolean(const std::string& key, bool& out)
  {
    if (const json* v = child(key)) {
      if (!v->is_boolean())
        throw ConfigError(where(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out)
  {
    if (const json* v = child(key)) {
      if (!v->is_string())
        throw ConfigError(where(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }

  void finish() const
  {
    for (const auto& item : obj_.items())
      if (!seen_.count(item.key()))
        throw ConfigError(where(item.key()) + ": unknown field");
  }

  std::string where(const std::string& key) const
  {
    std::string p = path_;
    if (!key.empty())
      p += p.empty() ? key : "." + key;
    return "field '" + (p.empty() ? std::string("<root>") : p) + "'";
  }

private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

inline json number_or_null(double v)
{
  return std::isfinite(v) ? json(v) : json(nullptr);
}

inline double double_or_nan(const json& v)
{
  return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

inline json to_json(const Eigen::MatrixXd& m)
{
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      row.push_back(number_or_null(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& rows, const std::string& what)
{
  if (!rows.is_array() || rows.empty() || !rows[0].is_array())
    throw ConfigError(what + ": expected an array of rows");
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].is_array() || rows[i].size() != rows[0].size())
      throw ConfigError(what + ": ragged matrix");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(i, j) = double_or_nan(rows[i][j]);
  }
  return m;
}

inline json to_json(const BlochVector& s) { return json::array({s.sx, s.sy, s.sz}); }

inline BlochVector bloch_from_json(const json& v, const std::string& what)
{
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number())
    throw ConfigError(what + ": expected an array of 3 numbers");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

} // namespace detail

inline std::string read_text_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out)
    throw IoError("failed writing '" + path.string() + "'");
}

inline json parse_json_text(const std::string& text, const std::string& source)
{
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // what() reads "[json.exception.parse_error.101] parse error at line L, column C: ..."
    std::string msg = e.what();
    if (const auto pos = msg.find("] "); msg.rfind("[json.exception", 0) == 0 && pos != std::string::npos)
      msg = msg.substr(pos + 2);
    throw ConfigError(source + ": JSON " + msg);
  }
}

// ---------------------------------------------------------------------------
// Run configuration

inline json to_json(const RunConfig& c)
{
  json inits = json::array();
  for (const auto& i : c.initializations)
    inits.push_back({{"label", i.label}, {"direction", detail::to_json(i.direction)}});
  return {
      {"timescales",
       {{"t_excited", c.timescales.t_excited},
        {"t2_star", detail::number_or_null(c.timescales.t2_star)},
        {"tau_r", c.timescales.tau_r},
        {"t_ground", detail::number_or_null(c.timescales.t_ground)}}},
      {"sim",
       {{"n_cycles", c.sim.n_cycles},
        {"collection_efficiency", c.sim.collection_efficiency},
        {"bin_width", c.sim.bin_width},
        {"window", c.sim.window},
        {"analyzer_error_rad", c.sim.analyzer_error},
        {"seed", c.sim.seed},
        {"rep_rate_mhz", c.sim.rep_rate_mhz}}},
      {"initializations", inits},
      {"polarization_degree", c.polarization_degree},
      {"ground_precession",
       {{"enabled", c.ground_precession.enabled},
        {"delay_ns", c.ground_precession.delay_ns},
        {"sense", c.ground_precession.sense == RotationSense::Negative ? "negative" : "positive"}}},
      {"bootstrap_resamples", c.bootstrap_resamples},
      {"output_dir", c.output_dir},
  };
}

/// Missing fields keep their defaults; unknown fields and wrong types are errors.
inline RunConfig run_config_from_json(const json& j)
{
  RunConfig c;
  detail::FieldReader root(j, "");
  if (const json* t = root.child("timescales")) {
    detail::FieldReader r(*t, "timescales");
    r.number("t_excited", c.timescales.t_excited);
    r.number_or_inf("t2_star", c.timescales.t2_star);
    r.number("tau_r", c.timescales.tau_r);
    r.number_or_inf("t_ground", c.timescales.t_ground);
    r.finish();
  }
  if (const json* s = root.child("sim")) {
    detail::FieldReader r(*s, "sim");
    r.count("n_cycles", c.sim.n_cycles);
    r.number("collection_efficiency", c.sim.collection_efficiency);
    r.number("bin_width", c.sim.bin_width);
    r.number("window", c.sim.window);
    r.number("analyzer_error_rad", c.sim.analyzer_error);
    if (r.has("analyzer_error_deg")) {
      if (r.has("analyzer_error_rad"))
        throw ConfigError("field 'sim': give analyzer_error_rad or analyzer_error_deg, not both");
      double deg = 0.0;
      r.number("analyzer_error_deg", deg);
      c.sim.analyzer_error = deg * std::numbers::pi / 180.0;
    }
    r.count("seed", c.sim.seed);
    r.number("rep_rate_mhz", c.sim.rep_rate_mhz);
    r.finish();
  }
  if (const json* inits = root.child("initializations")) {
    if (!inits->is_array())
      throw ConfigError("field 'initializations': expected an array");
    c.initializations.clear();
    for (std::size_t k = 0; k < inits->size(); ++k) {
      const std::string path = "initializations[" + std::to_string(k) + "]";
      detail::FieldReader r((*inits)[k], path);
      Initialization init;
      r.string("label", init.label);
      const json* dir = r.child("direction");
      if (!dir)
        throw ConfigError("field '" + path + ".direction': missing");
      init.direction = detail::bloch_from_json(*dir, "field '" + path + ".direction'");
      r.finish();
      c.initializations.push_back(init);
    }
  }
  root.number("polarization_degree", c.polarization_degree);
  if (const json* g = root.child("ground_precession")) {
    detail::FieldReader r(*g, "ground_precession");
    r.boolean("enabled", c.ground_precession.enabled);
    r.number("delay_ns", c.ground_precession.delay_ns);
    std::string sense = "negative";
    r.string("sense", sense);
    if (sense != "negative" && sense != "positive")
      throw ConfigError("field 'ground_precession.sense': expected \"negative\" or \"positive\"");
    c.ground_precession.sense = sense == "negative" ? RotationSense::Negative : RotationSense::Positive;
    r.finish();
  }
  root.integer("bootstrap_resamples", c.bootstrap_resamples);
  root.string("output_dir", c.output_dir);
  root.finish();
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path)
{
  const std::string text = read_text_file(path);
  try {
    return run_config_from_json(parse_json_text(text, path.string()));
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path.string(), 0) == 0)
      throw;
    throw ConfigError(path.string() + ": " + msg);
  }
}

// ---------------------------------------------------------------------------
// Trace CSV

inline std::string trace_to_csv(const TimeTrace& tr)
{
  std::ostringstream os;
  os << kTraceCsvHeader << '\n';
  os << std::fixed << std::setprecision(6);
  for (std::size_t i = 0; i < tr.size(); ++i)
    os << tr.bin_start[i] << ',' << tr.counts_r[i] << ',' << tr.counts_l[i] << '\n';
  return os.str();
}

inline TimeTrace trace_from_csv(const std::string& text, const std::string& source = "trace")
{
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw ConfigError(source + ": empty file");
  if (!line.empty() && line.back() == '\r')
    line.pop_back();

  std::vector<std::string> cols;
  {
    std::istringstream hs(line);
    std::string c;
    while (std::getline(hs, c, ','))
      cols.push_back(c);
  }
  int idx[3] = {-1, -1, -1};
  const char* names[3] = {"t_ns", "counts_r", "counts_l"};
  for (int k = 0; k < 3; ++k)
    for (std::size_t c = 0; c < cols.size(); ++c)
      if (cols[c] == names[k])
        idx[k] = static_cast<int>(c);
  for (int k = 0; k < 3; ++k)
    if (idx[k] < 0)
      throw ConfigError(source + ": missing column '" + names[k] + "' in header '" + line + "'");

  std::vector<double> t;
  TimeTrace tr;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ','))
      f.push_back(c);
    if (f.size() != cols.size())
      throw ConfigError(source + ": line " + std::to_string(lineno) + ": expected " + std::to_string(cols.size()) +
                        " fields, got " + std::to_string(f.size()));
    try {
      std::size_t used = 0;
      const double tv = std::stod(f[idx[0]], &used);
      if (used != f[idx[0]].size())
        throw std::invalid_argument("t_ns");
      auto parse_count = [&](const std::string& s) {
        if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
          throw std::invalid_argument("count");
        return static_cast<std::uint64_t>(std::stoull(s));
      };
      t.push_back(tv);
      tr.counts_r.push_back(parse_count(f[idx[1]]));
      tr.counts_l.push_back(parse_count(f[idx[2]]));
    } catch (const std::exception&) {
      throw ConfigError(source + ": line " + std::to_string(lineno) + ": malformed value");
    }
  }
  if (t.size() < 2)
    throw ConfigError(source + ": need at least 2 rows to determine the bin width");
  const double width = std::round((t.back() - t.front()) / static_cast<double>(t.size() - 1) * 1e9) / 1e9;
  if (!(width > 0.0))
    throw ConfigError(source + ": t_ns must increase");
  tr.bin_width = width;
  tr.bin_start.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    tr.bin_start[i] = t.front() + static_cast<double>(i) * width;
    if (std::abs(tr.bin_start[i] - t[i]) > 1e-6)
      throw ConfigError(source + ": line " + std::to_string(i + 2) + ": bins are not evenly spaced");
  }
  return tr;
}

inline void write_trace(const std::filesystem::path& path, const TimeTrace& tr)
{
  write_text_file(path, trace_to_csv(tr));
}

inline TimeTrace read_trace(const std::filesystem::path& path)
{
  return trace_from_csv(read_text_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Result records

inline std::string utc_timestamp()
{
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// 64-bit FNV-1a of a string, as 16 hex digits.
inline std::string fingerprint(const std::string& s)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string trace_set_id(const RunConfig& cfg)
{
  json j = to_json(cfg);
  j.erase("output_dir");
  j.erase("bootstrap_resamples");
  return fingerprint(j.dump());
}

inline json make_record(const std::string& command, const RunConfig& cfg)
{
  return {{"schema_version", kSchemaVersion}, {"command", command}, {"created_utc", utc_timestamp()},
          {"config", to_json(cfg)}};
}

inline void check_record(const json& rec, const std::string& command, const std::string& source)
{
  if (!rec.is_object() || !rec.contains("schema_version"))
    throw ConfigError(source + ": not a result record (no schema_version)");
  if (rec.at("schema_version") != kSchemaVersion)
    throw ConfigError(source + ": unsupported schema_version " + rec.at("schema_version").dump());
  if (rec.value("command", std::string()) != command)
    throw ConfigError(source + ": expected a '" + command + "' record, got '" + rec.value("command", std::string()) +
                      "'");
}

inline json to_json(const FitResult& f)
{
  json values = json::object(), sigmas = json::object(), bounds = json::object();
  for (std::size_t i = 0; i < f.names.size(); ++i) {
    values[f.names[i]] = detail::number_or_null(f.params(static_cast<Eigen::Index>(i)));
    sigmas[f.names[i]] = detail::number_or_null(f.sigma(f.names[i]));
    bounds[f.names[i]] = static_cast<bool>(f.at_bound[i]);
  }
  return {{"values", values},
          {"sigmas", sigmas},
          {"at_bound", bounds},
          {"covariance", detail::to_json(f.covariance)},
          {"chi2", f.chi2},
          {"reduced_chi2", f.reduced_chi2},
          {"converged", f.converged},
          {"iterations", f.iterations},
          {"message", f.message}};
}

inline json to_json(const CharacterizationFit& c)
{
  json j = to_json(c.fit);
  j["tau_r_seed"] = c.tau_r_seed;
  j["t2_star_at_bound"] = c.t2_star_at_bound;
  return j;
}

inline QubitTimescales timescales_from_record(const json& rec, const std::string& source)
{
  try {
    const json& v = rec.at("result").at("values");
    QubitTimescales ts;
    ts.t_excited = v.at("t_excited").get<double>();
    ts.t2_star = detail::double_or_nan(v.at("t2_star"));
    ts.tau_r = v.at("tau_r").get<double>();
    ts.validate();
    return ts;
  } catch (const json::exception& e) {
    throw ConfigError(source + ": malformed characterization record: " + e.what());
  }
}

inline json to_json(const StateTomography& s)
{
  const TomographyFit& f = s.fit;
  return {{"label", s.label},
          {"direction", detail::to_json(s.direction)},
          {"init_bloch", detail::to_json(s.init_bloch)},
          {"estimate", detail::to_json(f.estimate)},
          {"unclipped", detail::to_json(f.unclipped)},
          {"covariance", detail::to_json(f.covariance)},
          {"clipped", f.clipped},
          {"flat_h", f.flat_h},
          {"flat_b", f.flat_b},
          {"degenerate", f.degenerate},
          {"coarse_h", {{"v0", f.coarse_h.v0}, {"phi0", f.coarse_h.phi0}}},
          {"coarse_b", {{"v0", f.coarse_b.v0}, {"phi0", f.coarse_b.phi0}}},
          {"hb_residual", f.seed.residual},
          {"hb_consistent", f.seed.consistent},
          {"fit", to_json(f.fit)}};
}

/// The subset of a tomography entry that the map reconstruction needs.
struct MeasuredState
{
  std::string label;
  BlochVector direction;
  BlochVector estimate;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
};

inline std::vector<MeasuredState> measured_states_from_record(const json& rec, const std::string& source)
{
  std::vector<MeasuredState> out;
  try {
    for (const auto& s : rec.at("result").at("states")) {
      MeasuredState m;
      m.label = s.at("label").get<std::string>();
      m.direction = detail::bloch_from_json(s.at("direction"), source + ": state '" + m.label + "' direction");
      m.estimate = detail::bloch_from_json(s.at("estimate"), source + ": state '" + m.label + "' estimate");
      const Eigen::MatrixXd cov = detail::matrix_from_json(s.at("covariance"), source + ": covariance");
      if (cov.rows() != 3 || cov.cols() != 3)
        throw ConfigError(source + ": state '" + m.label + "' covariance must be 3x3");
      m.covariance = cov;
      out.push_back(m);
    }
  } catch (const json::exception& e) {
    throw ConfigError(source + ": malformed tomography record: " + e.what());
  }
  return out;
}

} // namespace pitomo

#endif
