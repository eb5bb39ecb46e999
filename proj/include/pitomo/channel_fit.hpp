#ifndef PITOMO_CHANNEL_FIT_HPP
#define PITOMO_CHANNEL_FIT_HPP

// Reconstruction of a completely positive, trace-preserving single-qubit map
// from (initialized, measured) state pairs, and process fidelity.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pitomo/bloch.hpp"
#include "pitomo/parallel.hpp"
#include "pitomo/photostream.hpp"

namespace pitomo {

struct StatePair
{
  DensityMatrix2 rho_init;
  DensityMatrix2 rho_meas;
  double weight = 1.0; ///< inverse variance of the measured state
};

inline DensityMatrix2 build_init_density(const BlochVector& direction, double p)
{
  if (std::abs(direction.norm() - 1.0) > kPhysicalTol)
    throw std::invalid_argument("build_init_density: direction must be a unit vector");
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("build_init_density: polarization degree must lie in [0, 1]");
  return bloch_to_density(p * direction);
}

/// Scalar inverse-variance weight from a 3x3 Bloch-vector covariance.
inline double pair_weight(const Eigen::Matrix3d& cov)
{
  const double tr = cov.trace();
  return (std::isfinite(tr) && tr > 0.0) ? 1.0 / tr : 1.0;
}

struct MapFit
{
  TransferMatrix4 map = TransferMatrix4::Identity();          ///< physical map
  TransferMatrix4 unconstrained = TransferMatrix4::Identity(); ///< linear stage only
  int projection_iterations = 0;
  bool projection_converged = true;
  double min_choi_eigenvalue = 0.0;
};

inline constexpr int kMaxProjectionIterations = 10'000;
inline constexpr double kProjectionTol = 1e-10;

namespace detail {

inline ChoiMatrix clip_to_psd_cone(const ChoiMatrix& j)
{
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(0.5 * (j + j.adjoint()));
  const Eigen::Vector4d ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
}

inline TransferMatrix4 pin_trace_preserving(TransferMatrix4 m)
{
  m.row(0) << 1.0, 0.0, 0.0, 0.0;
  return m;
}

inline std::string format_direction(const Eigen::Vector3d& v)
{
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << "[" << v(0) << ", " << v(1) << ", " << v(2) << "]";
  return os.str();
}

} // namespace detail

/// Weighted linear fit of the affine Bloch map followed by alternating
/// projections between the trace-preserving subspace and the cone of positive
/// Choi matrices.
inline MapFit fit_map(const std::vector<StatePair>& pairs)
{
  if (pairs.size() < 4)
    throw RankDeficiencyError("fit_map: need at least 4 state pairs, got " + std::to_string(pairs.size()));

  std::vector<Eigen::Vector3d> in, out;
  std::vector<double> w;
  for (const auto& p : pairs) {
    in.push_back(density_to_bloch(p.rho_init).vec());
    out.push_back(density_to_bloch(p.rho_meas).vec());
    if (!(p.weight > 0.0) || !std::isfinite(p.weight))
      throw std::invalid_argument("fit_map: pair weights must be positive and finite");
    w.push_back(p.weight);
  }

  // The inputs must affinely span all three Bloch directions.
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < in.size(); ++i)
    mean += w[i] * in[i];
  mean /= wsum;
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < in.size(); ++i)
    scatter += (w[i] / wsum) * (in[i] - mean) * (in[i] - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(scatter);
  std::string missing;
  for (int i = 0; i < 3; ++i)
    if (es.eigenvalues()(i) < 1e-10) {
      if (!missing.empty())
        missing += ", ";
      missing += detail::format_direction(es.eigenvectors().col(i));
    }
  if (!missing.empty())
    throw RankDeficiencyError("fit_map: initial states do not span the Bloch ball; missing direction(s) " + missing);

  Eigen::MatrixXd x(in.size(), 4);
  Eigen::MatrixXd y(in.size(), 3);
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double sw = std::sqrt(w[i]);
    x.row(i) << sw, sw * in[i].transpose();
    y.row(i) = sw * out[i].transpose();
  }
  const Eigen::MatrixXd beta = x.colPivHouseholderQr().solve(y); // 4x3: rows (offset, x, y, z)

  MapFit fit;
  fit.unconstrained = TransferMatrix4::Identity();
  fit.unconstrained.block<3, 4>(1, 0) = beta.transpose();

  ChoiMatrix j = transfer_to_choi(fit.unconstrained);
  TransferMatrix4 m = fit.unconstrained;
  fit.projection_converged = false;
  for (int it = 1; it <= kMaxProjectionIterations; ++it) {
    m = detail::pin_trace_preserving(choi_to_transfer(detail::clip_to_psd_cone(j)));
    const ChoiMatrix next = transfer_to_choi(m);
    const double diff = (next - j).cwiseAbs().maxCoeff();
    j = next;
    fit.projection_iterations = it;
    if (diff < kProjectionTol) {
      fit.projection_converged = true;
      break;
    }
  }

  // A residual negative eigenvalue is removed by mixing with the completely
  // depolarizing channel, whose Choi matrix is I/2.
  double lmin = hermitian_eigenvalues(j).minCoeff();
  if (lmin < 0.0) {
    const double alpha = -lmin / (0.5 - lmin);
    m = (1.0 - alpha) * m + alpha * depolarizing_map(0.0);
    j = transfer_to_choi(m);
    lmin = hermitian_eigenvalues(j).minCoeff();
  }
  fit.map = m;
  fit.min_choi_eigenvalue = lmin;
  return fit;
}

/// Jozsa fidelity of the trace-normalized Choi matrices of two maps.
inline double process_fidelity(const TransferMatrix4& m, const TransferMatrix4& ref)
{
  auto normalized_choi = [](const TransferMatrix4& t, const char* name) {
    if ((t.row(0) - Eigen::RowVector4d(1, 0, 0, 0)).cwiseAbs().maxCoeff() > kPhysicalTol)
      throw PhysicalityError(std::string("process_fidelity: ") + name + " is not trace preserving");
    try {
      return Eigen::MatrixXcd(project_psd(0.5 * transfer_to_choi(t)));
    } catch (const PhysicalityError& e) {
      throw PhysicalityError(std::string("process_fidelity: ") + name + " is not completely positive (" +
                             e.what() + ")");
    }
  };
  return state_fidelity(normalized_choi(m, "map"), normalized_choi(ref, "reference"));
}

struct BootstrapResult
{
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> samples;
};

/// Parametric bootstrap of the process fidelity against `ref`: each measured
/// Bloch vector is redrawn from a Gaussian with its tomography covariance
/// (then pulled back into the Bloch ball), the map refitted, the fidelity
/// recomputed. Resamples are independent; the result does not depend on `threads`.
inline BootstrapResult bootstrap_fidelity(const std::vector<StatePair>& pairs,
                                          const std::vector<Eigen::Matrix3d>& covariances,
                                          const TransferMatrix4& ref, int resamples, std::uint64_t seed,
                                          unsigned threads = 1)
{
  if (covariances.size() != pairs.size())
    throw std::invalid_argument("bootstrap_fidelity: one covariance per pair required");
  std::vector<Eigen::Matrix3d> factors;
  for (const auto& c : covariances) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(0.5 * (c + c.transpose()));
    factors.push_back(es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal());
  }

  BootstrapResult out;
  out.samples.assign(static_cast<std::size_t>(std::max(resamples, 0)), 0.0);
  parallel_for(out.samples.size(), threads, [&](std::size_t r) {
    std::mt19937_64 eng(splitmix64(seed ^ splitmix64(r + 1)));
    std::normal_distribution<double> normal;
    std::vector<StatePair> draw = pairs;
    for (std::size_t i = 0; i < draw.size(); ++i) {
      const Eigen::Vector3d z(normal(eng), normal(eng), normal(eng));
      const Eigen::Vector3d s = density_to_bloch(pairs[i].rho_meas).vec() + factors[i] * z;
      draw[i].rho_meas = bloch_to_density(clip_to_ball(BlochVector::from(s)));
    }
    out.samples[r] = process_fidelity(fit_map(draw).map, ref);
  });
  if (out.samples.empty())
    return out;
  out.mean = std::accumulate(out.samples.begin(), out.samples.end(), 0.0) / out.samples.size();
  double var = 0.0;
  for (double f : out.samples)
    var += (f - out.mean) * (f - out.mean);
  out.stddev = out.samples.size() > 1 ? std::sqrt(var / (out.samples.size() - 1)) : 0.0;
  return out;
}

} // namespace pitomo

#endif
