#pragma once

// Dense Hermitian kernels the rest of the library is built from: symmetrized
// eigendecompositions with a fixed column-phase convention, clipped PSD square
// roots, rank-revealing pseudoinverses and eigenvalue-product determinants.
// Everything is Eigen underneath; matrices stay small enough for dense work.

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <stdexcept>
#include <vector>

namespace krein {

using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;
using cplx = std::complex<double>;

inline double max_abs(const Mat& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline Mat hermitian_part(const Mat& m) { return 0.5 * (m + m.adjoint()); }

// operator norm of a Hermitian matrix (largest |eigenvalue|)
inline double herm_op_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(hermitian_part(m),
                                        Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

// operator norm of a general matrix (largest singular value)
inline double op_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(
      (m.adjoint() * m).eval(), Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues().maxCoeff();
  return top > 0.0 ? std::sqrt(top) : 0.0;
}

inline std::vector<double> singular_values(const Mat& m) {
  Eigen::BDCSVD<Mat> svd(m);
  const auto& s = svd.singularValues();
  return {s.data(), s.data() + s.size()};
}

// eigenvalues descending, unit eigenvector columns
struct EigenSystem {
  RVec values;
  Mat vectors;

  Eigen::Index dim() const { return values.size(); }
};

// Largest-modulus entry of each eigenvector is rotated to the positive real
// axis, which pins the free column phase and keeps runs reproducible.
inline void fix_column_phases(Mat& v) {
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    Eigen::Index imax = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      const double a = std::abs(v(i, j));
      if (a > best + 1e-15) {
        best = a;
        imax = i;
      }
    }
    if (best > 0.0) v.col(j) *= std::conj(v(imax, j)) / best;
  }
}

// Eigendecomposition of the Hermitian part of m. Non-finite input entries are
// rejected rather than propagated into NaN spectra.
inline EigenSystem hermitian_eig(const Mat& m) {
  if (m.rows() != m.cols())
    throw std::invalid_argument("hermitian_eig: matrix must be square");
  if (!m.allFinite())
    throw std::invalid_argument("hermitian_eig: non-finite entries");
  EigenSystem sys;
  if (m.rows() == 0) {
    sys.values = RVec(0);
    sys.vectors = Mat(0, 0);
    return sys;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(hermitian_part(m));
  if (es.info() != Eigen::Success)
    throw std::runtime_error("hermitian_eig: eigensolver failed");
  const Eigen::Index n = m.rows();
  sys.values = es.eigenvalues().reverse();
  sys.vectors = Mat(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    sys.vectors.col(j) = es.eigenvectors().col(n - 1 - j);
  fix_column_phases(sys.vectors);
  return sys;
}

// Square root of a PSD matrix. Eigenvalues below the noise floor are clipped
// to zero; anything more negative than that means the matrix handed in was
// not a positive boundary limit at all. abs_floor widens the clipping band
// when the input itself is only known up to some absolute error.
inline Mat psd_sqrt(const Mat& m, double abs_floor = 0.0) {
  const EigenSystem sys = hermitian_eig(m);
  if (sys.dim() == 0) return Mat(0, 0);
  const double scale = std::max(std::abs(sys.values(0)),
                                std::abs(sys.values(sys.dim() - 1)));
  const double eps_psd = std::max(1e-10 * scale, abs_floor);
  RVec roots(sys.dim());
  for (Eigen::Index j = 0; j < sys.dim(); ++j) {
    const double a = sys.values(j);
    if (a < -eps_psd)
      throw std::domain_error("not PSD: boundary limit unreliable");
    roots(j) = a > eps_psd ? std::sqrt(a) : 0.0;
  }
  return hermitian_part(sys.vectors * roots.asDiagonal() *
                        sys.vectors.adjoint());
}

struct PinvResult {
  Mat pinv;
  Eigen::Index rank = 0;
};

// Moore-Penrose inverse of a Hermitian PSD matrix with a relative spectral
// cutoff: eigenvalues below rel_tol times the top one count as zero.
inline PinvResult pinv_rank(const Mat& m, double rel_tol = 1e-8) {
  const EigenSystem sys = hermitian_eig(m);
  PinvResult out;
  out.pinv = Mat::Zero(m.rows(), m.cols());
  if (sys.dim() == 0 || sys.values(0) <= 0.0) return out;
  const double cut = rel_tol * sys.values(0);
  RVec inv = RVec::Zero(sys.dim());
  for (Eigen::Index j = 0; j < sys.dim(); ++j) {
    if (sys.values(j) >= cut) {
      inv(j) = 1.0 / sys.values(j);
      ++out.rank;
    }
  }
  out.pinv = sys.vectors * inv.asDiagonal() * sys.vectors.adjoint();
  return out;
}

// det(I + T) as the product of (1 + eigenvalue), the form that survives the
// trace-class limit. T need not be Hermitian.
inline cplx fredholm_det(const Mat& t) {
  if (t.rows() != t.cols())
    throw std::invalid_argument("fredholm_det: matrix must be square");
  if (t.size() == 0) return {1.0, 0.0};
  if (!t.allFinite())
    throw std::invalid_argument("fredholm_det: non-finite entries");
  Eigen::ComplexEigenSolver<Mat> es(t, false);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("fredholm_det: eigensolver failed");
  cplx det{1.0, 0.0};
  for (Eigen::Index j = 0; j < t.rows(); ++j)
    det *= cplx{1.0, 0.0} + es.eigenvalues()(j);
  return det;
}

}  // namespace krein
