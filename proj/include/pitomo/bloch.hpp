#ifndef PITOMO_BLOCH_HPP
#define PITOMO_BLOCH_HPP

// Bloch vectors, 2x2 density matrices and the two 4x4 representations of a
// single-qubit map (Pauli transfer matrix and Choi matrix).
//
// Conventions, shared by every header in this library:
//   * |+Z> is the first basis vector, sigma_z = diag(1, -1).
//   * rho = (I + sx sigma_x + sy sigma_y + sz sigma_z) / 2.
//   * X is the eigenstate axis of the precessing qubits.
//   * A TransferMatrix4 R acts on (1, sx, sy, sz); R(i,j) = Tr(P_i E(P_j)) / 2
//     with P = (I, sigma_x, sigma_y, sigma_z).
//   * The Choi matrix is J = sum_ab |a><b| (x) E(|a><b|), input factor first,
//     so the identity channel has J = 2 |Phi+><Phi+| and Tr J = 2.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "pitomo/errors.hpp"

namespace pitomo {

using cplx = std::complex<double>;
using DensityMatrix2 = Eigen::Matrix2cd;
using TransferMatrix4 = Eigen::Matrix4d;
using ChoiMatrix = Eigen::Matrix4cd;

inline constexpr double kPhysicalTol = 1e-9;
inline constexpr double kHermitianTol = 1e-12;

struct BlochVector
{
  double sx = 0.0;
  double sy = 0.0;
  double sz = 0.0;

  double norm() const { return std::sqrt(sx * sx + sy * sy + sz * sz); }
  bool is_physical(double tol = kPhysicalTol) const { return norm() <= 1.0 + tol; }

  Eigen::Vector3d vec() const { return {sx, sy, sz}; }
  static BlochVector from(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }

  friend BlochVector operator+(const BlochVector& a, const BlochVector& b)
  {
    return {a.sx + b.sx, a.sy + b.sy, a.sz + b.sz};
  }
  friend BlochVector operator-(const BlochVector& a, const BlochVector& b)
  {
    return {a.sx - b.sx, a.sy - b.sy, a.sz - b.sz};
  }
  friend BlochVector operator*(double k, const BlochVector& a) { return {k * a.sx, k * a.sy, k * a.sz}; }
  friend bool operator==(const BlochVector&, const BlochVector&) = default;
};

/// Scales v back onto the unit sphere when it lies outside the Bloch ball.
inline BlochVector clip_to_ball(const BlochVector& v)
{
  const double n = v.norm();
  return n > 1.0 ? (1.0 / n) * v : v;
}

namespace pauli {

inline Eigen::Matrix2cd I() { return Eigen::Matrix2cd::Identity(); }
inline Eigen::Matrix2cd X()
{
  Eigen::Matrix2cd m;
  m << 0, 1, 1, 0;
  return m;
}
inline Eigen::Matrix2cd Y()
{
  Eigen::Matrix2cd m;
  m << 0, cplx(0, -1), cplx(0, 1), 0;
  return m;
}
inline Eigen::Matrix2cd Z()
{
  Eigen::Matrix2cd m;
  m << 1, 0, 0, -1;
  return m;
}
inline std::array<Eigen::Matrix2cd, 4> basis() { return {I(), X(), Y(), Z()}; }

} // namespace pauli

inline bool is_hermitian(const Eigen::MatrixXcd& m, double tol = kHermitianTol)
{
  return m.rows() == m.cols() && (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

inline DensityMatrix2 bloch_to_density(const BlochVector& s)
{
  DensityMatrix2 rho;
  rho << cplx(0.5 * (1.0 + s.sz), 0.0), cplx(0.5 * s.sx, -0.5 * s.sy),
      cplx(0.5 * s.sx, 0.5 * s.sy), cplx(0.5 * (1.0 - s.sz), 0.0);
  return rho;
}

inline BlochVector density_to_bloch(const DensityMatrix2& rho)
{
  if (!is_hermitian(rho))
    throw PhysicalityError("density_to_bloch: matrix is not Hermitian");
  if (std::abs(rho.trace() - cplx(1.0, 0.0)) > kHermitianTol)
    throw PhysicalityError("density_to_bloch: trace differs from 1");
  const cplx off = rho(1, 0);
  return {2.0 * off.real(), 2.0 * off.imag(), (rho(0, 0) - rho(1, 1)).real()};
}

/// Eigenvalues of a Hermitian matrix, ascending.
inline Eigen::VectorXd hermitian_eigenvalues(const Eigen::MatrixXcd& m)
{
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

/// Accepts a marginally unphysical state: eigenvalues >= -tol are clipped to 0
/// and the result is renormalized to unit trace. Anything worse throws.
inline Eigen::MatrixXcd project_psd(const Eigen::MatrixXcd& m, double tol = kPhysicalTol)
{
  if (!is_hermitian(m, std::max(tol, kHermitianTol)))
    throw PhysicalityError("matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (m + m.adjoint()));
  const Eigen::VectorXd ev = es.eigenvalues();
  if (ev.minCoeff() < -tol)
    throw PhysicalityError("matrix has eigenvalue " + std::to_string(ev.minCoeff()) + " below tolerance");
  const Eigen::VectorXd clipped = ev.cwiseMax(0.0);
  Eigen::MatrixXcd out = es.eigenvectors() * clipped.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
  const double tr = clipped.sum();
  if (tr <= 0.0)
    throw PhysicalityError("matrix has zero trace after clipping");
  return out / tr;
}

namespace detail {

// Square root of a PSD Hermitian matrix. Eigenvalues at rounding level are
// set to 0 before the square root, which would otherwise amplify them to ~1e-8.
inline Eigen::MatrixXcd psd_sqrt(const Eigen::MatrixXcd& m)
{
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (m + m.adjoint()));
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * es.eigenvalues().cwiseAbs().maxCoeff();
  const Eigen::VectorXd r = es.eigenvalues().unaryExpr([floor](double v) { return v > floor ? std::sqrt(v) : 0.0; });
  return es.eigenvectors() * r.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
}

inline void check_state(const Eigen::MatrixXcd& m, const char* name)
{
  if (m.rows() != m.cols())
    throw PhysicalityError(std::string(name) + " is not square");
  if (!is_hermitian(m, 1e-9))
    throw PhysicalityError(std::string(name) + " is not Hermitian");
  if (std::abs(m.trace().real() - 1.0) > 1e-9)
    throw PhysicalityError(std::string(name) + " does not have unit trace");
  if (hermitian_eigenvalues(m).minCoeff() < -kPhysicalTol)
    throw PhysicalityError(std::string(name) + " is not positive semidefinite");
}

} // namespace detail

/// Jozsa fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, any dimension.
inline double state_fidelity(const Eigen::MatrixXcd& rho, const Eigen::MatrixXcd& sigma)
{
  detail::check_state(rho, "rho");
  detail::check_state(sigma, "sigma");
  if (rho.rows() != sigma.rows())
    throw PhysicalityError("state_fidelity: dimension mismatch");
  // Tr sqrt(sqrt(rho) sigma sqrt(rho)) is the nuclear norm of sqrt(rho) sqrt(sigma).
  const Eigen::MatrixXcd prod = detail::psd_sqrt(rho) * detail::psd_sqrt(sigma);
  const double t = Eigen::JacobiSVD<Eigen::MatrixXcd>(prod).singularValues().sum();
  return std::clamp(t * t, 0.0, 1.0);
}

inline ChoiMatrix transfer_to_choi(const TransferMatrix4& m)
{
  const auto p = pauli::basis();
  ChoiMatrix j = ChoiMatrix::Zero();
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k)
      if (m(i, k) != 0.0)
        j += 0.5 * m(i, k) * Eigen::Matrix4cd(Eigen::kroneckerProduct(p[k].transpose(), p[i]));
  return j;
}

inline TransferMatrix4 choi_to_transfer(const ChoiMatrix& j)
{
  const auto p = pauli::basis();
  TransferMatrix4 m;
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) {
      const Eigen::Matrix4cd basis = Eigen::kroneckerProduct(p[k].transpose(), p[i]);
      m(i, k) = 0.5 * (j * basis).trace().real();
    }
  return m;
}

/// Tr over the output factor; equals I_2 for a trace-preserving map.
inline Eigen::Matrix2cd partial_trace_output(const ChoiMatrix& j)
{
  Eigen::Matrix2cd r;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      r(a, b) = j(2 * a, 2 * b) + j(2 * a + 1, 2 * b + 1);
  return r;
}

inline BlochVector apply_map(const TransferMatrix4& m, const BlochVector& s)
{
  const Eigen::Vector4d out = m * Eigen::Vector4d(1.0, s.sx, s.sy, s.sz);
  return {out(1), out(2), out(3)};
}

inline TransferMatrix4 depolarizing_map(double lambda)
{
  return Eigen::Vector4d(1.0, lambda, lambda, lambda).asDiagonal();
}

/// Pauli transfer matrix of a rotation by `angle` about the Z axis.
inline TransferMatrix4 z_rotation_map(double angle)
{
  TransferMatrix4 m = TransferMatrix4::Identity();
  m(1, 1) = std::cos(angle);
  m(1, 2) = -std::sin(angle);
  m(2, 1) = std::sin(angle);
  m(2, 2) = std::cos(angle);
  return m;
}

} // namespace pitomo

#endif
