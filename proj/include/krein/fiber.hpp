#pragma once

// Fiber data at a boundary point: the positive matrix phi = (1/pi) Im T, its
// square root eta (the evaluation kernel), and the numerically supported
// subspace. Everything downstream (wave matrices, scattering matrices) acts
// on the span of the top eigenvectors of eta.

#include <krein/linalg.hpp>
#include <krein/models.hpp>

#include <stdexcept>

namespace krein {

struct FiberData {
  double lambda = 0.0;
  double r = 0.0;
  Mat phi;           // (1/pi) Im T_r(lambda + i0), PSD
  Mat eta;           // psd_sqrt(phi)
  EigenSystem eigen; // of eta, descending
  Eigen::Index d = 0;
  Mat basis;         // ambient x d, top eigenvector columns of eta
  double rel_tol = 1e-8;
};

// Fiber data from a raw positive boundary matrix (already (1/pi) Im T).
// noise_floor is the absolute uncertainty of the boundary matrix: eigenvalue
// mass below it cannot be distinguished from zero and is dropped rather than
// rejected as a sign violation.
inline FiberData fiber_from_phi(double lambda, double r, const Mat& phi_raw,
                                double rel_tol = 1e-8,
                                double noise_floor = 0.0) {
  FiberData fd;
  fd.lambda = lambda;
  fd.r = r;
  fd.rel_tol = rel_tol;
  fd.phi = hermitian_part(phi_raw);
  fd.eta = psd_sqrt(fd.phi, noise_floor);
  fd.eigen = hermitian_eig(fd.eta);
  const Eigen::Index n = fd.eigen.dim();
  fd.d = 0;
  if (n > 0 && fd.eigen.values(0) > 0.0) {
    const double cut = rel_tol * fd.eigen.values(0);
    while (fd.d < n && fd.eigen.values(fd.d) >= cut) ++fd.d;
  }
  fd.basis = fd.eigen.vectors.leftCols(fd.d);
  return fd;
}

inline Mat imag_part(const Mat& t) { return (t - t.adjoint()) / cplx(0.0, 2.0); }

inline FiberData fiber_data(const BoundaryData& bd, double rel_tol = 1e-8) {
  if (!bd.in_limit_set)
    throw std::domain_error(
        "resonance point: boundary limit does not exist for this coupling");
  return fiber_from_phi(bd.lambda, bd.r, imag_part(bd.t) / M_PI, rel_tol,
                        50.0 * bd.est_error);
}

// Coefficients of eta * beta in the fiber basis: the boundary evaluation of
// the frame expansion with coefficient vector beta.
inline Vec evaluate(const Vec& beta, const FiberData& fd) {
  if (beta.size() != fd.eta.rows())
    throw std::invalid_argument("evaluate: dimension mismatch");
  return fd.basis.adjoint() * (fd.eta * beta);
}

// Largest ratio of the n-th eigenvalue of a finite-y phi matrix against the
// weight bound kappa_n^2 / y; stays <= 1 for genuine resolvent data.
inline double snumber_bound_margin(const Mat& phi_y, const Frame& frame,
                                   double y) {
  const EigenSystem sys = hermitian_eig(phi_y);
  double worst = 0.0;
  for (Eigen::Index nn = 0; nn < sys.dim(); ++nn) {
    const double cap = frame.weights(nn) * frame.weights(nn) / y;
    worst = std::max(worst, sys.values(nn) / cap);
  }
  return worst;
}

}  // namespace krein
