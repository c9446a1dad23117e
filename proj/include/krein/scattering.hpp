#pragma once

// Stationary scattering machinery at a fixed boundary point lambda. The
// central object is LambdaContext: it caches the unperturbed boundary matrix,
// the base fiber and a rank-k factorization of the coupling, after which
// every fiber, wave matrix and scattering matrix along the coupling path
// costs O(N^2 k) instead of a fresh N^3 solve.
//
// Scattering matrices come out of three independent routes (wave-matrix
// product, stationary formula, chronological product integral) that the test
// suites play against each other.

#include <krein/fiber.hpp>
#include <krein/linalg.hpp>
#include <krein/models.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace krein {

// ---------------------------------------------------------------------------
// chronological exponential

// Solution operator of X'(t) = (1/i) A(t) X(t), X(a) = I, by two-node
// Gauss-Legendre Magnus steps (4th order). Each factor is exp(-iK) with K
// Hermitian, so the result is exactly unitary for Hermitian paths. Step
// counts double until two consecutive levels agree to eps_ode.
inline Mat texp(const std::function<Mat(double)>& a_fn, double t_lo,
                double t_hi, double eps_ode = 1e-8) {
  const Mat probe = a_fn(0.5 * (t_lo + t_hi));
  const Eigen::Index d = probe.rows();
  if (d == 0) return Mat(0, 0);
  if (t_lo == t_hi) return Mat::Identity(d, d);
  const double offset = std::sqrt(3.0) / 6.0;
  auto run = [&](int steps) {
    Mat x = Mat::Identity(d, d);
    const double h = (t_hi - t_lo) / steps;
    for (int i = 0; i < steps; ++i) {
      const double mid = t_lo + (i + 0.5) * h;
      const Mat a1 = a_fn(mid - offset * h);
      const Mat a2 = a_fn(mid + offset * h);
      const Mat k = hermitian_part(
          0.5 * h * (a1 + a2) -
          cplx(0.0, 1.0) * (std::sqrt(3.0) * h * h / 12.0) *
              (a2 * a1 - a1 * a2));
      Eigen::SelfAdjointEigenSolver<Mat> es(k);
      Vec rot(d);
      for (Eigen::Index q = 0; q < d; ++q)
        rot(q) = std::polar(1.0, -es.eigenvalues()(q));
      x = es.eigenvectors() * rot.asDiagonal() * es.eigenvectors().adjoint() *
          x;
    }
    return x;
  };
  int steps = 8;
  Mat prev = run(steps);
  for (int level = 0; level < 10; ++level) {
    steps *= 2;
    Mat cur = run(steps);
    if (max_abs(cur - prev) < eps_ode) return cur;
    prev = std::move(cur);
  }
  throw std::runtime_error("path too rough");
}

// ---------------------------------------------------------------------------
// per-lambda cache

// Thin fiber representation: phi_s = (B diag(alpha)) (B diag(alpha))*, with
// B the orthonormal fiber basis and alpha the eta eigenvalues.
struct FiberLite {
  double s = 0.0;
  Mat b;       // ambient x d
  RVec alpha;  // d
  Eigen::Index d = 0;
};

struct LambdaContext {
  OperatorModel model;
  Frame frame;
  Perturbation pert;
  double lambda = 0.0;
  double base_r = 0.0;  // coupling of the reference operator
  double rel_tol = 1e-8;

  Mat t_base;      // T_base(lambda + i0)
  FiberLite fiber_base;
  double fiber_est_error = 0.0;

  // rank-k factorization J = G diag(gamma) G*
  Mat g;          // N x k
  RVec gamma;     // k
  Mat m_base;     // k x k   G* T_base G
  Mat w_base;     // k x N   G* T_base
  Mat tg_base;    // N x k   T_base G

  Eigen::Index dim() const { return frame.dim(); }
  Eigen::Index k() const { return gamma.size(); }
};

namespace detail {

inline FiberLite lite_from_factor(double s, const Mat& factor,
                                  double rel_tol) {
  FiberLite fl;
  fl.s = s;
  const Eigen::Index cols = factor.cols();
  if (cols == 0) {
    fl.b = Mat(factor.rows(), 0);
    fl.alpha = RVec(0);
    return fl;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es((factor.adjoint() * factor).eval());
  std::vector<std::pair<double, Eigen::Index>> order;
  for (Eigen::Index q = 0; q < cols; ++q)
    order.emplace_back(es.eigenvalues()(q), q);
  std::sort(order.rbegin(), order.rend());
  const double top = order.empty() ? 0.0 : std::sqrt(std::max(0.0, order[0].first));
  Mat b(factor.rows(), cols);
  RVec alpha(cols);
  Eigen::Index d = 0;
  for (const auto& [val, q] : order) {
    const double sv = std::sqrt(std::max(0.0, val));
    if (sv < rel_tol * top || sv == 0.0) break;
    b.col(d) = factor * es.eigenvectors().col(q) / sv;
    alpha(d) = sv;
    ++d;
  }
  fl.b = b.leftCols(d);
  fl.alpha = alpha.head(d);
  fl.d = d;
  fix_column_phases(fl.b);
  return fl;
}

inline FiberLite lite_from_fiber(const FiberData& fd) {
  FiberLite fl;
  fl.s = fd.r;
  fl.b = fd.basis;
  fl.alpha = fd.eigen.values.head(fd.d);
  fl.d = fd.d;
  return fl;
}

}  // namespace detail

// Context at coupling base_r = 0. The boundary matrix comes from
// boundary_resolvent, so resonance points are rejected there.
namespace detail {

// shared tail of context construction once the base boundary matrix and the
// fiber are known
inline LambdaContext assemble_context(const OperatorModel& model,
                                      const Frame& frame,
                                      const Perturbation& pert, double lambda,
                                      Mat t_base, FiberLite fiber,
                                      double fiber_est_error, double rel_tol) {
  LambdaContext ctx;
  ctx.model = model;
  ctx.frame = frame;
  ctx.pert = pert;
  ctx.lambda = lambda;
  ctx.rel_tol = rel_tol;
  ctx.t_base = std::move(t_base);
  ctx.fiber_est_error = fiber_est_error;
  ctx.fiber_base = std::move(fiber);

  const EigenSystem js = hermitian_eig(pert.j);
  const double jtop = js.dim() == 0 ? 0.0 : js.values.cwiseAbs().maxCoeff();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index q = 0; q < js.dim(); ++q)
    if (std::abs(js.values(q)) > 1e-12 * std::max(jtop, 1e-300))
      keep.push_back(q);
  ctx.g = Mat(frame.dim(), static_cast<Eigen::Index>(keep.size()));
  ctx.gamma = RVec(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t q = 0; q < keep.size(); ++q) {
    ctx.g.col(static_cast<Eigen::Index>(q)) = js.vectors.col(keep[q]);
    ctx.gamma(static_cast<Eigen::Index>(q)) = js.values(keep[q]);
  }
  ctx.m_base = ctx.g.adjoint() * ctx.t_base * ctx.g;
  ctx.w_base = ctx.g.adjoint() * ctx.t_base;
  ctx.tg_base = ctx.t_base * ctx.g;
  return ctx;
}

}  // namespace detail

inline LambdaContext make_context(const OperatorModel& model,
                                  const Frame& frame,
                                  const Perturbation& pert, double lambda,
                                  double rel_tol = 1e-8) {
  const auto bd = boundary_resolvent(model, frame, pert, 0.0, lambda);
  const FiberData fd = fiber_data(bd, rel_tol);
  return detail::assemble_context(model, frame, pert, lambda, bd.t0,
                                  detail::lite_from_fiber(fd), bd.est_error,
                                  rel_tol);
}

namespace detail {

// (I_k + dr Gamma M_base)^{-1}, the small core every Woodbury step shares
inline Mat core_inverse(const LambdaContext& ctx, double dr) {
  const Eigen::Index k = ctx.k();
  const Mat lhs = Mat::Identity(k, k) +
                  dr * ctx.gamma.cast<cplx>().asDiagonal() * ctx.m_base;
  return lhs.partialPivLu().solve(Mat::Identity(k, k));
}

// apply (I + dr J T_base)^{-1} to an ambient x m block
inline Mat apply_x(const LambdaContext& ctx, double dr, const Mat& rhs,
                   const Mat& core) {
  if (ctx.k() == 0 || dr == 0.0) return rhs;
  return rhs - dr * ctx.g *
                   (core * ctx.gamma.cast<cplx>().asDiagonal() *
                    (ctx.w_base * rhs));
}

// apply the adjoint (I + dr T_base* J)^{-1} = X*
inline Mat apply_x_adj(const LambdaContext& ctx, double dr, const Mat& rhs,
                       const Mat& core) {
  if (ctx.k() == 0 || dr == 0.0) return rhs;
  return rhs - dr * ctx.w_base.adjoint() *
                   (ctx.gamma.cast<cplx>().asDiagonal() * core.adjoint() *
                    (ctx.g.adjoint() * rhs));
}

inline double sigma_min_core(const LambdaContext& ctx, double dr) {
  const Eigen::Index k = ctx.k();
  if (k == 0) return 1.0;
  const Mat lhs = Mat::Identity(k, k) +
                  dr * ctx.gamma.cast<cplx>().asDiagonal() * ctx.m_base;
  return sigma_min(lhs);
}

}  // namespace detail

// fiber at coupling s (relative step dr = s - base_r), via the imaginary-part
// sandwich phi_s = X_s* phi_base X_s
inline FiberLite fiber_at(const LambdaContext& ctx, double s) {
  const double dr = s - ctx.base_r;
  if (dr == 0.0) return ctx.fiber_base;
  const Mat core = detail::core_inverse(ctx, dr);
  const Mat f_base =
      ctx.fiber_base.b * ctx.fiber_base.alpha.cast<cplx>().asDiagonal();
  const Mat f_s = detail::apply_x_adj(ctx, dr, f_base, core);
  return detail::lite_from_factor(s, f_s, ctx.rel_tol);
}

// T_s(lambda + i0) column action: T_s = T_base X_s
inline Mat t_at_applied(const LambdaContext& ctx, double s, const Mat& rhs) {
  const double dr = s - ctx.base_r;
  const Mat core = detail::core_inverse(ctx, dr);
  return ctx.t_base * detail::apply_x(ctx, dr, rhs, core);
}

// context rebased to coupling r (the operator H_r becomes the reference)
inline LambdaContext make_rebased(const LambdaContext& ctx, double r) {
  if (r == ctx.base_r) return ctx;
  LambdaContext out = ctx;
  out.base_r = r;
  const double dr = r - ctx.base_r;
  if (detail::sigma_min_core(ctx, dr) <= kResonanceEps)
    throw std::domain_error(
        "resonance point: boundary limit does not exist for this coupling");
  const Mat core = detail::core_inverse(ctx, dr);
  out.t_base =
      ctx.t_base - dr * ctx.tg_base *
                       (core * ctx.gamma.cast<cplx>().asDiagonal() *
                        ctx.w_base);
  out.fiber_base = fiber_at(ctx, r);
  out.m_base = out.g.adjoint() * out.t_base * out.g;
  out.w_base = out.g.adjoint() * out.t_base;
  out.tg_base = out.t_base * out.g;
  return out;
}

// ---------------------------------------------------------------------------
// boundary amplitudes and wave matrices

struct BoundaryAmplitude {
  Mat a;                // ambient x ambient
  double two_form_gap;  // disagreement of the two equivalent expressions
};

// A_pm = [I - T_{r1}(lambda -/+ i0) dJ] (1/pi) Im T_{r0}(lambda + i0),
// cross-checked against (1/pi) Im T_{r1} [I + dJ T_{r0}(lambda +/- i0)].
inline BoundaryAmplitude a_pm(const OperatorModel& model, const Frame& frame,
                              const Perturbation& pert, double lambda,
                              double r0, double r1, int sign) {
  if (sign != +1 && sign != -1)
    throw std::invalid_argument("a_pm: sign must be +1 or -1");
  const auto bd0 = boundary_resolvent(model, frame, pert, r0, lambda);
  const auto bd1 = boundary_resolvent(model, frame, pert, r1, lambda);
  const Eigen::Index n = frame.dim();
  const Mat dj = (r1 - r0) * pert.j;
  const Mat t1_m = sign > 0 ? bd1.t.adjoint() : bd1.t;  // T_{r1}(lambda -/+ i0)
  const Mat t0_p = sign > 0 ? bd0.t : bd0.t.adjoint();  // T_{r0}(lambda +/- i0)
  const Mat phi0 = imag_part(bd0.t) / M_PI;
  const Mat phi1 = imag_part(bd1.t) / M_PI;
  BoundaryAmplitude out;
  out.a = (Mat::Identity(n, n) - t1_m * dj) * phi0;
  const Mat second = phi1 * (Mat::Identity(n, n) + dj * t0_p);
  out.two_form_gap = max_abs(out.a - second);
  if (out.two_form_gap > 1e-9 * std::max(1.0, max_abs(out.a)))
    throw std::runtime_error(
        "boundary amplitude: the two defining expressions disagree");
  return out;
}

struct WaveMatrix {
  int sign = +1;
  double lambda = 0.0;
  double r0 = 0.0;
  double r1 = 0.0;
  Mat w;             // d1 x d0
  double residual = 0.0;
};

// w_sign(lambda; H_{r1}, H_{r0}) compressed to the fiber bases. Fast path:
// every factor is applied in rank-k / rank-d form.
inline WaveMatrix wave_matrix(const LambdaContext& ctx, double r0, double r1,
                              int sign, double tol_wave = 1e-6) {
  if (sign != +1 && sign != -1)
    throw std::invalid_argument("wave_matrix: sign must be +1 or -1");
  const FiberLite f0 = fiber_at(ctx, r0);
  const FiberLite f1 = fiber_at(ctx, r1);
  const double dr = r1 - r0;
  WaveMatrix out;
  out.sign = sign;
  out.lambda = ctx.lambda;
  out.r0 = r0;
  out.r1 = r1;

  // A applied to the r0 fiber factor: [I - T_{r1}(-/+) dJ] F0
  const Mat factor0 = f0.b * f0.alpha.cast<cplx>().asDiagonal();
  Mat a_f0 = factor0;
  if (dr != 0.0 && ctx.k() > 0) {
    const Mat jf0 = dr * ctx.g *
                    (ctx.gamma.cast<cplx>().asDiagonal() *
                     (ctx.g.adjoint() * factor0));
    const double dr1 = r1 - ctx.base_r;
    const Mat core1 = detail::core_inverse(ctx, dr1);
    Mat t1_applied;
    if (sign > 0) {
      // T_{r1}(lambda - i0) = (T_base X_{r1})^*, applied via the adjoint
      t1_applied =
          detail::apply_x_adj(ctx, dr1, (ctx.t_base.adjoint() * jf0).eval(),
                              core1);
    } else {
      t1_applied = ctx.t_base * detail::apply_x(ctx, dr1, jf0, core1);
    }
    a_f0 -= t1_applied;
  }

  // W = diag(1/alpha1) B1* A B0 diag(1/alpha0), where a_f0 = A B0 diag(1/alpha0)
  const Mat b1_a_f0 = f1.b.adjoint() * a_f0;
  Mat w = b1_a_f0;
  for (Eigen::Index i = 0; i < f1.d; ++i) w.row(i) /= f1.alpha(i);
  out.w = w;
  // defining equation: eta1 (B1 W B0*) eta0 must reproduce A on the source
  // fiber, so the mass of A B0 outside the target fiber is the error
  const Mat a_b0 = a_f0 * f0.alpha.cast<cplx>().asDiagonal();
  const Mat leak = a_b0 - f1.b * (f1.b.adjoint() * a_b0);
  out.residual = leak.norm();
  if (out.residual > tol_wave)
    throw std::runtime_error("wave-matrix defining equation not satisfied");
  return out;
}

// ---------------------------------------------------------------------------
// scattering matrices

enum class ScatteringRoute { wave_product, stationary, texp };

struct ScatteringMatrix {
  double lambda = 0.0;
  double r0 = 0.0;
  double r1 = 0.0;
  Mat s;  // d0 x d0, acting on the fiber of the reference coupling
  ScatteringRoute route = ScatteringRoute::stationary;
};

inline std::vector<double> eigenphases(const Mat& s) {
  if (s.rows() == 0) return {};
  Eigen::ComplexEigenSolver<Mat> es(s, false);
  std::vector<double> out(static_cast<std::size_t>(s.rows()));
  for (Eigen::Index q = 0; q < s.rows(); ++q)
    out[static_cast<std::size_t>(q)] = std::arg(es.eigenvalues()(q));
  std::sort(out.begin(), out.end());
  return out;
}

// S(lambda; H_{r1}, H_{base}) = I - 2 pi i P (dr Gamma) (I + dr M Gamma)^{-1} P*
// with P = B* eta G the fiber-compressed coupling frame.
inline ScatteringMatrix scattering_stationary(const LambdaContext& ctx,
                                              double r1) {
  const double dr = r1 - ctx.base_r;
  const FiberLite& f0 = ctx.fiber_base;
  ScatteringMatrix out;
  out.lambda = ctx.lambda;
  out.r0 = ctx.base_r;
  out.r1 = r1;
  out.route = ScatteringRoute::stationary;
  const Eigen::Index k = ctx.k();
  if (f0.d == 0 || k == 0 || dr == 0.0) {
    out.s = Mat::Identity(f0.d, f0.d);
    return out;
  }
  if (detail::sigma_min_core(ctx, dr) <= kResonanceEps)
    throw std::domain_error(
        "resonance point: boundary limit does not exist for this coupling");
  const Mat p = f0.alpha.cast<cplx>().asDiagonal() *
                (f0.b.adjoint() * ctx.g);  // d0 x k
  const Mat lhs = Mat::Identity(k, k) +
                  dr * ctx.m_base * ctx.gamma.cast<cplx>().asDiagonal();
  const Mat core = lhs.partialPivLu().solve(Mat::Identity(k, k));
  out.s = Mat::Identity(f0.d, f0.d) -
          cplx(0.0, 2.0 * M_PI) * dr * p *
              ctx.gamma.cast<cplx>().asDiagonal() * core * p.adjoint();
  return out;
}

inline ScatteringMatrix scattering_wave_product(const LambdaContext& ctx,
                                                double r1,
                                                double tol_wave = 1e-6) {
  const WaveMatrix wp = wave_matrix(ctx, ctx.base_r, r1, +1, tol_wave);
  const WaveMatrix wm = wave_matrix(ctx, ctx.base_r, r1, -1, tol_wave);
  ScatteringMatrix out;
  out.lambda = ctx.lambda;
  out.r0 = ctx.base_r;
  out.r1 = r1;
  out.route = ScatteringRoute::wave_product;
  out.s = wp.w.adjoint() * wm.w;
  return out;
}

// the full-space unitary I - 2 pi i dr eta J (I + dr T J)^{-1} eta whose
// nontrivial spectrum coincides with the fiber scattering matrix
inline Mat s_tilde_full(const LambdaContext& ctx, double r1) {
  const Eigen::Index n = ctx.dim();
  const double dr = r1 - ctx.base_r;
  const FiberLite& f0 = ctx.fiber_base;
  const Mat eta =
      f0.b * f0.alpha.cast<cplx>().asDiagonal() * f0.b.adjoint();
  const Mat lhs = Mat::Identity(n, n) + dr * ctx.t_base * ctx.pert.j;
  const Mat inv = lhs.partialPivLu().solve(Mat::Identity(n, n));
  return Mat::Identity(n, n) -
         cplx(0.0, 2.0 * M_PI) * dr * eta * ctx.pert.j * inv * eta;
}

// Compression of the full-space unitary at a regularized point lambda + iy:
// its nontrivial eigenvalues are those of I_k - 2 i r Gamma (I + r M Gamma)^{-1} N
// with M = G* T0(lambda+iy) G and N = G* Im T0(lambda+iy) G.
struct RegularizedCore {
  double lambda = 0.0;
  double y = 0.0;
  RVec gamma;
  Mat m;  // k x k
  Mat n;  // k x k Hermitian PSD
};

inline RegularizedCore regularized_core(const LambdaContext& ctx, double y) {
  if (!(y > 0.0)) throw std::invalid_argument("regularized_core: need y > 0");
  RegularizedCore rc;
  rc.lambda = ctx.lambda;
  rc.y = y;
  rc.gamma = ctx.gamma;
  const Mat t = t0_matrix(ctx.model, ctx.frame, cplx(ctx.lambda, y));
  rc.m = ctx.g.adjoint() * t * ctx.g;
  rc.n = hermitian_part(ctx.g.adjoint() * imag_part(t) * ctx.g);
  return rc;
}

inline Vec s_tilde_core_eigenvalues(const RegularizedCore& rc, double r) {
  const Eigen::Index k = rc.gamma.size();
  if (k == 0) return Vec(0);
  const Mat lhs = Mat::Identity(k, k) +
                  r * rc.m * rc.gamma.cast<cplx>().asDiagonal();
  const Mat s_small =
      Mat::Identity(k, k) -
      cplx(0.0, 2.0 * r) * rc.gamma.cast<cplx>().asDiagonal() *
          lhs.partialPivLu().solve(rc.n);
  Eigen::ComplexEigenSolver<Mat> es(s_small, false);
  return es.eigenvalues();
}

// ---------------------------------------------------------------------------
// coupling derivative of the scattering matrix

struct InfinitesimalSM {
  double lambda = 0.0;
  double s = 0.0;
  Mat pi;  // d_s x d_s Hermitian
  double trace = 0.0;
};

// Pi(s) = B_s* eta_s J eta_s B_s = diag(alpha) (G* B_s)* Gamma (G* B_s) diag(alpha)
inline InfinitesimalSM inf_scattering_matrix(const LambdaContext& ctx,
                                             double s) {
  const FiberLite f = fiber_at(ctx, s);
  InfinitesimalSM out;
  out.lambda = ctx.lambda;
  out.s = s;
  if (f.d == 0 || ctx.k() == 0) {
    out.pi = Mat::Zero(f.d, f.d);
    return out;
  }
  const Mat gb = ctx.g.adjoint() * f.b;  // k x d
  out.pi = hermitian_part(f.alpha.cast<cplx>().asDiagonal() * gb.adjoint() *
                          ctx.gamma.cast<cplx>().asDiagonal() * gb *
                          f.alpha.cast<cplx>().asDiagonal());
  out.trace = out.pi.trace().real();
  return out;
}

// ---------------------------------------------------------------------------
// resonance scan

struct ResonancePoint {
  double r = 0.0;
  double sigma_min = 0.0;
};

struct ResonanceScan {
  double lambda = 0.0;
  double r_lo = 0.0;
  double r_hi = 0.0;
  std::vector<ResonancePoint> resonances;
  std::vector<std::pair<double, double>> samples;  // (r, sigma_min)
};

namespace detail {

// Resonance couplings in (lo, hi) located through the rank-k core: zeros of
// det(I_k + dr Gamma M) sit exactly at dr = -1/eig(Gamma M), so real-axis
// candidates are exhaustive whenever the coupling is exactly rank k.
inline std::vector<double> resonance_locations(const LambdaContext& ctx,
                                               double lo, double hi) {
  std::vector<double> out;
  if (ctx.k() == 0) return out;
  const Mat gm = ctx.gamma.cast<cplx>().asDiagonal() * ctx.m_base;
  Eigen::ComplexEigenSolver<Mat> es(gm, false);
  for (Eigen::Index q = 0; q < ctx.k(); ++q) {
    const cplx mu = es.eigenvalues()(q);
    if (std::abs(mu) < 1e-14) continue;
    const cplx rz = -1.0 / mu + cplx(ctx.base_r, 0.0);
    if (std::abs(rz.imag()) > 1e-9 * std::max(1.0, std::abs(rz.real())))
      continue;
    if (sigma_min_core(ctx, rz.real() - ctx.base_r) >= kResonanceEps) continue;
    if (rz.real() > lo && rz.real() < hi) out.push_back(rz.real());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// golden-section minimization of a unimodal dip
template <typename Fn>
ResonancePoint golden_refine(Fn&& f, double lo, double hi,
                             double resolution = 1e-10) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > resolution) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    }
  }
  const double xm = 0.5 * (a + b);
  return {xm, f(xm)};
}

}  // namespace detail

// Sample sigma_min(I + r J T0(lambda+i0)) on a uniform grid, refine every dip
// by golden section, and additionally probe the exact zeros of the rank-k
// core determinant so that dips narrower than the grid are not skipped.
inline ResonanceScan resonance_scan(const LambdaContext& ctx, double r_lo,
                                    double r_hi, int n_samples = 201) {
  if (!(r_hi > r_lo) || n_samples < 3)
    throw std::invalid_argument("resonance_scan: bad window");
  ResonanceScan out;
  out.lambda = ctx.lambda;
  out.r_lo = r_lo;
  out.r_hi = r_hi;
  const Eigen::Index n = ctx.dim();
  const Mat jt = ctx.pert.j * ctx.t_base;
  auto sig = [&](double r) {
    return sigma_min((Mat::Identity(n, n) + (r - ctx.base_r) * jt).eval());
  };
  std::vector<double> vals(static_cast<std::size_t>(n_samples));
  const double h = (r_hi - r_lo) / (n_samples - 1);
  for (int i = 0; i < n_samples; ++i) {
    const double r = r_lo + i * h;
    vals[static_cast<std::size_t>(i)] = sig(r);
    out.samples.emplace_back(r, vals[static_cast<std::size_t>(i)]);
  }
  std::vector<std::pair<double, double>> brackets;  // refinement intervals
  for (int i = 1; i + 1 < n_samples; ++i) {
    if (vals[i] < vals[i - 1] && vals[i] <= vals[i + 1])
      brackets.emplace_back(r_lo + (i - 1) * h, r_lo + (i + 1) * h);
  }
  // exact candidates from the rank-k core: zeros at dr = -1/eig(Gamma M)
  if (ctx.k() > 0) {
    const Mat gm = ctx.gamma.cast<cplx>().asDiagonal() * ctx.m_base;
    Eigen::ComplexEigenSolver<Mat> es(gm, false);
    for (Eigen::Index q = 0; q < ctx.k(); ++q) {
      const cplx mu = es.eigenvalues()(q);
      if (std::abs(mu) < 1e-14) continue;
      const cplx rz = -1.0 / mu + cplx(ctx.base_r, 0.0);
      if (std::abs(rz.imag()) > 1e-6 * std::max(1.0, std::abs(rz.real())))
        continue;
      const double rc = rz.real();
      if (rc <= r_lo || rc >= r_hi) continue;
      brackets.emplace_back(std::max(r_lo, rc - 0.5 * h),
                            std::min(r_hi, rc + 0.5 * h));
    }
  }
  std::vector<ResonancePoint> found;
  for (const auto& [lo, hi] : brackets) {
    const ResonancePoint rp = detail::golden_refine(sig, lo, hi);
    if (rp.sigma_min < kResonanceEps) found.push_back(rp);
  }
  std::sort(found.begin(), found.end(),
            [](const ResonancePoint& a, const ResonancePoint& b) {
              return a.r < b.r;
            });
  // merge duplicates from overlapping brackets; the refinement stalls inside
  // the floating-point noise basin of a dip, so points closer than the basin
  // scale are one resonance and the deepest sample wins
  for (const auto& rp : found) {
    if (!out.resonances.empty()) {
      ResonancePoint& last = out.resonances.back();
      const double merge_dist =
          std::max(1e-7 * (1.0 + std::abs(rp.r)), 1e-8 * (r_hi - r_lo));
      if (rp.r - last.r <= merge_dist) {
        if (rp.sigma_min < last.sigma_min) last = rp;
        continue;
      }
    }
    out.resonances.push_back(rp);
  }
  return out;
}

// ---------------------------------------------------------------------------
// chronological-exponential route

// Evaluator for the texp integrand 2 pi w_+(base<-s) Pi(s) w_+(base<-s)*,
// with resonance windows bridged by a least-squares quadratic through clean
// neighbours on each side.
class TexpIntegrand {
public:
  TexpIntegrand(const LambdaContext& ctx, std::vector<double> resonances,
                double window)
      : ctx_(&ctx), resonances_(std::move(resonances)), window_(window) {
    for (std::size_t i = 0; i + 1 < resonances_.size(); ++i)
      if (resonances_[i + 1] - resonances_[i] < 4.0 * window_)
        throw std::runtime_error(
            "resonance windows overlap; interval not integrable");
  }

  Mat operator()(double s) const {
    const double rs = nearest_resonance(s);
    if (std::abs(s - rs) >= window_) return direct(s);
    // quadratic fit through four clean nodes flanking the window
    std::array<double, 4> nodes = {rs - 2.0 * window_, rs - 1.5 * window_,
                                   rs + 1.5 * window_, rs + 2.0 * window_};
    std::vector<double> xs;
    std::vector<Mat> ys;
    for (double x : nodes) {
      if (std::abs(x - nearest_resonance(x)) < window_) continue;
      xs.push_back(x);
      ys.push_back(direct(x));
    }
    if (xs.size() < 3)
      throw std::runtime_error(
          "resonance windows overlap; interval not integrable");
    // least-squares quadratic in (s - rs)
    Eigen::MatrixXd v(static_cast<Eigen::Index>(xs.size()), 3);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double u = xs[i] - rs;
      v(static_cast<Eigen::Index>(i), 0) = 1.0;
      v(static_cast<Eigen::Index>(i), 1) = u;
      v(static_cast<Eigen::Index>(i), 2) = u * u;
    }
    const Eigen::MatrixXd coeff =
        (v.transpose() * v).ldlt().solve(v.transpose()).eval();
    const double u = s - rs;
    Mat out = Mat::Zero(ys[0].rows(), ys[0].cols());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double wgt = coeff(0, static_cast<Eigen::Index>(i)) +
                         coeff(1, static_cast<Eigen::Index>(i)) * u +
                         coeff(2, static_cast<Eigen::Index>(i)) * u * u;
      out += wgt * ys[i];
    }
    return hermitian_part(out);
  }

private:
  double nearest_resonance(double s) const {
    double best = std::numeric_limits<double>::infinity();
    double dist = std::numeric_limits<double>::infinity();
    for (double r : resonances_) {
      if (std::abs(s - r) < dist) {
        dist = std::abs(s - r);
        best = r;
      }
    }
    return best;
  }

  Mat direct(double s) const {
    const WaveMatrix w = wave_matrix(*ctx_, s, ctx_->base_r, +1);
    const InfinitesimalSM pi = inf_scattering_matrix(*ctx_, s);
    return hermitian_part(2.0 * M_PI * w.w * pi.pi * w.w.adjoint());
  }

  const LambdaContext* ctx_;
  std::vector<double> resonances_;
  double window_;
};

inline ScatteringMatrix scattering_texp(const LambdaContext& ctx, double r1,
                                        double eps_ode = 1e-6) {
  ScatteringMatrix out;
  out.lambda = ctx.lambda;
  out.r0 = ctx.base_r;
  out.r1 = r1;
  out.route = ScatteringRoute::texp;
  const double lo = std::min(ctx.base_r, r1), hi = std::max(ctx.base_r, r1);
  if (lo == hi || ctx.fiber_base.d == 0) {
    out.s = Mat::Identity(ctx.fiber_base.d, ctx.fiber_base.d);
    return out;
  }
  const double pad = 2e-2 * (hi - lo);
  const std::vector<double> res_r =
      detail::resonance_locations(ctx, lo - pad, hi + pad);
  const double window = (hi - lo) / 128.0;
  const TexpIntegrand integrand(ctx, res_r, window);
  out.s = texp(integrand, ctx.base_r, r1, eps_ode);
  return out;
}

}  // namespace krein
