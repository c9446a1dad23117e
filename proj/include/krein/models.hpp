#pragma once

// The operator models and their frame-sandwiched resolvents T(z) = F R_z F*.
// Three model families are supported:
//   FiniteHermitian    - explicit N x N Hermitian matrix, resolvents by solve
//   FreeJacobi         - nearest-neighbour hopping on the integer lattice,
//                        resolvent kernel in closed form through the root of
//                        w + 1/w = z inside the unit disk
//   MultiplicationGrid - multiplication by x on a union of touching cells with
//                        piecewise-linear density; cell-indicator frame
//                        vectors give a diagonal T(z) of Cauchy transforms
// Boundary values at z = lambda + i0 come from the closed forms where they
// exist and from a Richardson ladder in y for the finite model.

#include <krein/frame.hpp>
#include <krein/linalg.hpp>
#include <krein/random.hpp>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <variant>
#include <vector>

namespace krein {

constexpr double kEdgeGuard = 0.05;    // spectral-edge exclusion, lattice model
constexpr double kResonanceEps = 1e-7; // sigma_min threshold for limit-set membership

struct FiniteHermitian {
  Mat h;
};

struct FreeJacobi {
  // Frame index i (0-based) sits on lattice site 0, +1, -1, +2, -2, ...
  static int site(Eigen::Index i) {
    const Eigen::Index k = (i + 1) / 2;
    return (i % 2 == 1) ? static_cast<int>(k) : -static_cast<int>(k);
  }
};

struct MultiplicationGrid {
  RVec nodes;      // cell edges, strictly increasing, size N+1
  RVec densities;  // density values at the nodes, >= 0, size N+1
};

using OperatorModel = std::variant<FiniteHermitian, FreeJacobi, MultiplicationGrid>;

struct Perturbation {
  Mat j;

  // rank-k Hermitian with unit operator norm, reproducible from the seed
  static Perturbation random_rank(Eigen::Index n, Eigen::Index rank,
                                  std::uint64_t seed) {
    Rng rng(seed);
    const Mat u = rng.orthonormal_cols(n, rank);
    RVec c(rank);
    double top = 0.0;
    for (Eigen::Index i = 0; i < rank; ++i) {
      double x = 0.0;
      while (std::abs(x) < 0.2) x = rng.uniform(-1.0, 1.0);
      c(i) = x;
      top = std::max(top, std::abs(x));
    }
    c /= top;
    Perturbation p;
    p.j = hermitian_part(u * c.asDiagonal() * u.adjoint());
    return p;
  }
};

enum class ResolventMethod { closed_form, finite_inverse, y_extrapolated };

struct SandwichedResolvent {
  cplx z;
  double r = 0.0;
  Mat t;
  ResolventMethod method = ResolventMethod::closed_form;
  double est_error = 0.0;
};

struct BoundaryData {
  double lambda = 0.0;
  double r = 0.0;
  Mat t;        // T_r(lambda + i0)
  Mat t0;       // T_0(lambda + i0), the unperturbed boundary matrix
  ResolventMethod method = ResolventMethod::closed_form;
  double est_error = 0.0;
  double sigma_min = 0.0;  // smallest singular value of I + rJ T_0(lambda+i0)
  bool in_limit_set = false;
};

namespace detail {

inline void check_model(const OperatorModel& model, const Frame& frame) {
  frame.validate();
  if (const auto* fh = std::get_if<FiniteHermitian>(&model)) {
    if (fh->h.rows() != fh->h.cols() || fh->h.rows() != frame.dim())
      throw std::invalid_argument("model: matrix dim must match frame dim");
    if (!fh->h.allFinite())
      throw std::invalid_argument("model: non-finite entries");
  } else if (const auto* mg = std::get_if<MultiplicationGrid>(&model)) {
    const Eigen::Index cells = mg->nodes.size() - 1;
    if (cells < 1 || mg->densities.size() != mg->nodes.size())
      throw std::invalid_argument("grid model: need N+1 nodes and densities");
    if (cells != frame.dim())
      throw std::invalid_argument("grid model: cell count must match frame dim");
    for (Eigen::Index k = 0; k < mg->nodes.size(); ++k) {
      if (k > 0 && !(mg->nodes(k) > mg->nodes(k - 1)))
        throw std::invalid_argument("grid model: nodes must increase");
      if (!(mg->densities(k) >= 0.0))
        throw std::invalid_argument("grid model: densities must be >= 0");
    }
    for (Eigen::Index k = 0; k < cells; ++k)
      if (mg->densities(k) + mg->densities(k + 1) <= 0.0)
        throw std::invalid_argument("grid model: cell has zero mass");
  }
}

inline void check_perturbation(const Perturbation& pert, const Frame& frame) {
  if (pert.j.rows() != frame.dim() || pert.j.cols() != frame.dim())
    throw std::invalid_argument("perturbation: dim must match frame dim");
  if (!pert.j.allFinite())
    throw std::invalid_argument("perturbation: non-finite entries");
  if (max_abs(pert.j - pert.j.adjoint()) > 1e-12 * (1.0 + max_abs(pert.j)))
    throw std::invalid_argument("perturbation: matrix must be Hermitian");
}

// root of w + 1/w = z inside the closed unit disk, continuous on Im z >= 0
inline cplx jacobi_root(cplx z) {
  const cplx s = std::sqrt(z - 2.0) * std::sqrt(z + 2.0);
  cplx w = 0.5 * (z - s);
  if (std::abs(w) > 1.0) w = 0.5 * (z + s);
  return w;
}

// free lattice resolvent kernel G(n, m; z) = w^{|n-m|+1} / (w^2 - 1)
inline Mat free_jacobi_t0(const Frame& frame, cplx w) {
  const Eigen::Index n = frame.dim();
  std::vector<cplx> pow(2 * n + 2);
  pow[0] = 1.0;
  for (std::size_t d = 1; d < pow.size(); ++d) pow[d] = pow[d - 1] * w;
  const cplx denom = w * w - 1.0;
  Mat t(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int si = FreeJacobi::site(i);
    for (Eigen::Index j = 0; j <= i; ++j) {
      const int d = std::abs(si - FreeJacobi::site(j));
      const cplx g = pow[static_cast<std::size_t>(d) + 1] / denom;
      t(i, j) = frame.weights(i) * frame.weights(j) * g;
      t(j, i) = t(i, j);  // kernel depends on |n - m| only
    }
  }
  return t;
}

// Cauchy transform of the normalized linear density on cell k; principal
// logs are analytic for Im z > 0 and produce the Plemelj limit at the cut
inline cplx cell_cauchy(const MultiplicationGrid& mg, Eigen::Index k, cplx z) {
  const double a = mg.nodes(k), b = mg.nodes(k + 1);
  const double ra = mg.densities(k), rb = mg.densities(k + 1);
  const double alpha = (rb - ra) / (b - a);
  const double beta = ra - alpha * a;
  const double mass = 0.5 * (ra + rb) * (b - a);
  const cplx lg = std::log(b - z) - std::log(a - z);
  return (alpha * (b - a) + (alpha * z + beta) * lg) / mass;
}

inline cplx cell_cauchy_boundary(const MultiplicationGrid& mg, Eigen::Index k,
                                 double lambda) {
  const double a = mg.nodes(k), b = mg.nodes(k + 1);
  const double ra = mg.densities(k), rb = mg.densities(k + 1);
  const double alpha = (rb - ra) / (b - a);
  const double beta = ra - alpha * a;
  const double mass = 0.5 * (ra + rb) * (b - a);
  cplx lg;
  if (lambda < a)
    lg = std::log((b - lambda) / (a - lambda));
  else if (lambda > b)
    lg = std::log((lambda - b) / (lambda - a));
  else
    lg = cplx(std::log((b - lambda) / (lambda - a)), M_PI);
  return (alpha * (b - a) + (alpha * lambda + beta) * lg) / mass;
}

inline double grid_lambda_guard(const MultiplicationGrid& mg) {
  double min_cell = std::numeric_limits<double>::max();
  for (Eigen::Index k = 0; k + 1 < mg.nodes.size(); ++k)
    min_cell = std::min(min_cell, mg.nodes(k + 1) - mg.nodes(k));
  return 1e-3 * min_cell;
}

}  // namespace detail

// F J F with the diagonal frame: entrywise kappa_i kappa_j J_ij
inline Mat frame_dressed(const Mat& j, const Frame& frame) {
  Mat out = j;
  for (Eigen::Index a = 0; a < out.rows(); ++a)
    for (Eigen::Index b = 0; b < out.cols(); ++b)
      out(a, b) *= frame.weights(a) * frame.weights(b);
  return out;
}

inline Mat perturbed_matrix(const FiniteHermitian& fh, const Frame& frame,
                            const Perturbation& pert, double r) {
  return fh.h + r * frame_dressed(pert.j, frame);
}

// T_0(z) for Im z > 0
inline Mat t0_matrix(const OperatorModel& model, const Frame& frame, cplx z) {
  detail::check_model(model, frame);
  if (!(z.imag() > 0.0))
    throw std::invalid_argument("t0_matrix: need Im z > 0");
  if (const auto* fh = std::get_if<FiniteHermitian>(&model)) {
    const Eigen::Index n = frame.dim();
    Mat lhs = fh->h - z * Mat::Identity(n, n);
    Mat rhs = Mat::Zero(n, n);
    rhs.diagonal() = frame.weights.cast<cplx>();
    Mat x = lhs.partialPivLu().solve(rhs);
    return frame.weights.cast<cplx>().asDiagonal() * x;
  }
  if (std::holds_alternative<FreeJacobi>(model))
    return detail::free_jacobi_t0(frame, detail::jacobi_root(z));
  const auto& mg = std::get<MultiplicationGrid>(model);
  Mat t = Mat::Zero(frame.dim(), frame.dim());
  for (Eigen::Index k = 0; k < frame.dim(); ++k)
    t(k, k) = frame.weights(k) * frame.weights(k) *
              detail::cell_cauchy(mg, k, z);
  return t;
}

// admissibility of a boundary point for the closed-form models
inline bool lambda_admissible(const OperatorModel& model, double lambda) {
  if (std::holds_alternative<FreeJacobi>(model))
    return std::abs(lambda) < 2.0 - kEdgeGuard;
  if (const auto* mg = std::get_if<MultiplicationGrid>(&model)) {
    const double guard = detail::grid_lambda_guard(*mg);
    for (Eigen::Index k = 0; k < mg->nodes.size(); ++k)
      if (std::abs(lambda - mg->nodes(k)) < guard) return false;
    return true;
  }
  return true;  // finite model: membership decided by the ladder
}

// T_0(lambda + i0) in closed form (lattice and grid models only)
inline Mat t0_boundary_closed(const OperatorModel& model, const Frame& frame,
                              double lambda) {
  detail::check_model(model, frame);
  if (!lambda_admissible(model, lambda))
    throw std::invalid_argument("boundary point outside the admissible window");
  if (std::holds_alternative<FreeJacobi>(model)) {
    const double theta = std::acos(0.5 * lambda);
    return detail::free_jacobi_t0(frame, std::polar(1.0, -theta));
  }
  if (const auto* mg = std::get_if<MultiplicationGrid>(&model)) {
    Mat t = Mat::Zero(frame.dim(), frame.dim());
    for (Eigen::Index k = 0; k < frame.dim(); ++k)
      t(k, k) = frame.weights(k) * frame.weights(k) *
                detail::cell_cauchy_boundary(*mg, k, lambda);
    return t;
  }
  throw std::invalid_argument("finite model has no closed boundary form");
}

inline double sigma_min(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es((m.adjoint() * m).eval(),
                                        Eigen::EigenvaluesOnly);
  const double low = es.eigenvalues().minCoeff();
  return low > 0.0 ? std::sqrt(low) : 0.0;
}

// T_r(z) = F (H_r - z)^{-1} F* for Im z > 0
inline SandwichedResolvent sandwiched_resolvent(const OperatorModel& model,
                                                const Frame& frame,
                                                const Perturbation& pert,
                                                double r, cplx z) {
  detail::check_model(model, frame);
  detail::check_perturbation(pert, frame);
  if (!(z.imag() > 0.0))
    throw std::invalid_argument("sandwiched_resolvent: need Im z > 0");
  SandwichedResolvent out;
  out.z = z;
  out.r = r;
  const Eigen::Index n = frame.dim();
  if (const auto* fh = std::get_if<FiniteHermitian>(&model)) {
    Mat lhs = perturbed_matrix(*fh, frame, pert, r) - z * Mat::Identity(n, n);
    Mat rhs = Mat::Zero(n, n);
    rhs.diagonal() = frame.weights.cast<cplx>();
    Mat x = lhs.partialPivLu().solve(rhs);
    out.t = frame.weights.cast<cplx>().asDiagonal() * x;
    out.method = ResolventMethod::finite_inverse;
    out.est_error = max_abs(lhs * x - rhs);
    return out;
  }
  const Mat t0 = t0_matrix(model, frame, z);
  if (r == 0.0) {
    out.t = t0;
    out.method = ResolventMethod::closed_form;
    return out;
  }
  const Mat lhs = Mat::Identity(n, n) + r * pert.j * t0;
  Eigen::PartialPivLU<Mat> lu(lhs.transpose().eval());
  const Mat t = (lu.solve(t0.transpose())).transpose();  // t * lhs = t0
  if (!t.allFinite())
    throw std::logic_error("resolvent identity became singular off the real axis");
  out.t = t;
  out.method = ResolventMethod::closed_form;
  out.est_error = max_abs(t * lhs - t0);
  if (out.est_error > 1e-8 * std::max(1.0, max_abs(t0)))
    throw std::logic_error("resolvent identity became singular off the real axis");
  return out;
}

namespace detail {

// Richardson ladder in y for T(lambda + iy) -> T(lambda + i0) on the finite
// model. Returns the extrapolated matrix, the last-step difference and
// whether the raw ladder differences kept shrinking.
struct LadderResult {
  Mat t;
  double est_error = 0.0;
  bool decreasing = true;
};

template <typename Fn>
LadderResult y_ladder(Fn&& eval, double y0 = 1e-2, int k_max = 12) {
  std::vector<Mat> row;  // Richardson tableau, newest row
  LadderResult out;
  Mat prev_raw;
  double prev_diff = -1.0;
  std::vector<Mat> prev_row;
  for (int k = 0; k <= k_max; ++k) {
    const double y = y0 * std::pow(2.0, -k);
    Mat raw = eval(y);
    if (k >= 1) {
      const double diff = max_abs(raw - prev_raw);
      const double floor = 1e-13 * (1.0 + max_abs(raw));
      if (prev_diff >= 0.0 && diff > prev_diff * 1.02 + 1e-15 && diff > floor)
        out.decreasing = false;
      prev_diff = diff;
    }
    prev_raw = raw;
    row.assign(1, std::move(raw));
    for (std::size_t m = 1; m <= prev_row.size(); ++m) {
      const double f = std::pow(2.0, static_cast<double>(m));
      row.push_back((f * row[m - 1] - prev_row[m - 1]) / (f - 1.0));
    }
    if (row.size() > 7) row.resize(7);
    if (k == k_max) {
      out.t = row.back();
      out.est_error = row.size() > 1
                          ? max_abs(row[row.size() - 1] - row[row.size() - 2])
                          : prev_diff;
    }
    prev_row = row;
  }
  return out;
}

}  // namespace detail

// T_r(lambda + i0) together with the unperturbed boundary matrix and the
// limit-set membership evidence. Asking for a resonance point is an error.
inline BoundaryData boundary_resolvent(const OperatorModel& model,
                                       const Frame& frame,
                                       const Perturbation& pert, double r,
                                       double lambda) {
  detail::check_model(model, frame);
  detail::check_perturbation(pert, frame);
  const Eigen::Index n = frame.dim();
  BoundaryData out;
  out.lambda = lambda;
  out.r = r;
  if (const auto* fh = std::get_if<FiniteHermitian>(&model)) {
    auto eval0 = [&](double y) {
      return t0_matrix(model, frame, cplx(lambda, y));
    };
    const auto lad0 = detail::y_ladder(eval0);
    auto evalr = [&](double y) {
      return sandwiched_resolvent(model, frame, pert, r, cplx(lambda, y)).t;
    };
    const auto ladr = r == 0.0 ? lad0 : detail::y_ladder(evalr);
    out.t0 = lad0.t;
    out.t = ladr.t;
    out.method = ResolventMethod::y_extrapolated;
    out.est_error = std::max(lad0.est_error, ladr.est_error);
    out.sigma_min =
        sigma_min(Mat::Identity(n, n) + r * pert.j * out.t0);
    out.in_limit_set =
        lad0.decreasing && ladr.decreasing && out.sigma_min > kResonanceEps;
    (void)fh;
  } else {
    out.t0 = t0_boundary_closed(model, frame, lambda);
    out.method = ResolventMethod::closed_form;
    out.sigma_min =
        sigma_min(Mat::Identity(n, n) + r * pert.j * out.t0);
    out.in_limit_set = out.sigma_min > kResonanceEps;
    if (out.in_limit_set) {
      if (r == 0.0) {
        out.t = out.t0;
      } else {
        const Mat lhs = Mat::Identity(n, n) + r * pert.j * out.t0;
        out.t = (lhs.transpose().partialPivLu().solve(out.t0.transpose()))
                    .transpose();
        out.est_error = max_abs(out.t * lhs - out.t0);
      }
    }
  }
  if (!out.in_limit_set)
    throw std::domain_error(
        "resonance point: boundary limit does not exist for this coupling");
  return out;
}

}  // namespace krein
