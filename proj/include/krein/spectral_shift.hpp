#pragma once

// Spectral shift function split into its absolutely continuous and singular
// parts at a fixed boundary point. The a.c. part comes out of two independent
// routes (coupling integral of the generator trace, determinant branch of the
// scattering matrix); the total comes out of winding counts of two continuous
// eigenphase families against an angle grid, and the singular part is their
// difference, which the grid estimator reproduces as an exact integer.
//
// Eigenphases of the regularized characteristic matrix are tracked on three
// small regularization heights at once and Richardson-extrapolated to the
// real axis, which keeps the winding information that the literal boundary
// matrix of a finite model throws away.

#include <krein/fiber.hpp>
#include <krein/linalg.hpp>
#include <krein/models.hpp>
#include <krein/scattering.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

namespace krein {

// ---------------------------------------------------------------------------
// continuous eigenphase families along the coupling

// phases of one family on a shared coupling ladder; theta[l][i] holds the
// unwound eigenphases of ladder l at nodes[i], anchored at zero for r = 0
struct PhaseFamily {
  std::vector<double> nodes;
  std::vector<std::vector<RVec>> theta;
};

namespace detail {

inline double wrap_pi(double x) {
  double y = std::remainder(x, 2.0 * M_PI);
  if (y <= -M_PI) y += 2.0 * M_PI;
  return y;
}

struct EigPair {
  Vec values;
  Mat vectors;
};

inline EigPair unitary_eig(const Mat& m) {
  Eigen::ComplexEigenSolver<Mat> es(m, true);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("branch tracking failed near resonance");
  return {es.eigenvalues(), es.eigenvectors()};
}

// channel continuation: pick[j] is the candidate column continuing channel j.
// Greedy on the overlap matrix, with a full assignment scan when the greedy
// choice is ambiguous; mislabeling two phase-crossing channels is harmless
// for every winding sum, so only gross mismatches matter here.
inline std::vector<Eigen::Index> match_channels(const Mat& ref,
                                                const Mat& cand) {
  const Eigen::Index k = ref.cols();
  std::vector<Eigen::Index> pick(static_cast<std::size_t>(k), 0);
  if (k == 0) return pick;
  Eigen::MatrixXd ov(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      ov(i, j) = std::abs((ref.col(i).adjoint() * cand.col(j)).value());
  std::vector<bool> row_done(static_cast<std::size_t>(k), false);
  std::vector<bool> col_done(static_cast<std::size_t>(k), false);
  double worst = 1.0;
  for (Eigen::Index n = 0; n < k; ++n) {
    double best = -1.0;
    Eigen::Index bi = 0, bj = 0;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (row_done[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (col_done[static_cast<std::size_t>(j)]) continue;
        if (ov(i, j) > best) {
          best = ov(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    row_done[static_cast<std::size_t>(bi)] = true;
    col_done[static_cast<std::size_t>(bj)] = true;
    pick[static_cast<std::size_t>(bi)] = bj;
    worst = std::min(worst, best);
  }
  if (worst >= 0.7 || k > 8) return pick;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), Eigen::Index(0));
  double best_sum = -1.0;
  std::vector<Eigen::Index> best_perm = pick;
  do {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < k; ++i)
      sum += ov(i, perm[static_cast<std::size_t>(i)]);
    if (sum > best_sum) {
      best_sum = sum;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best_perm;
}

struct TrackState {
  std::vector<RVec> theta;
  std::vector<Mat> vec;
};

// complex coupling where (I + r Gamma M)^{-1} turns singular near the
// tracked interval; the real part marks the center of a phase sweep and the
// imaginary part its width
struct WindingWindow {
  double center = 0.0;
  double scale = 0.0;
};

inline std::vector<WindingWindow> winding_windows(const RVec& gamma,
                                                  const Mat& m, double r_from,
                                                  double r_to) {
  std::vector<WindingWindow> out;
  const Eigen::Index k = gamma.size();
  if (k == 0) return out;
  const double lo = std::min(r_from, r_to), hi = std::max(r_from, r_to);
  const double margin = 0.1 * (hi - lo) + 1e-12;
  Eigen::ComplexEigenSolver<Mat> es(
      (gamma.cast<cplx>().asDiagonal() * m).eval(), false);
  for (Eigen::Index q = 0; q < k; ++q) {
    const cplx mu = es.eigenvalues()(q);
    if (std::abs(mu) < 1e-14) continue;
    const cplx z = -1.0 / mu;
    if (z.real() < lo - margin || z.real() > hi + margin) continue;
    out.push_back({z.real(), std::max(std::abs(z.imag()), 1e-12)});
  }
  return out;
}

// monotone node list from r_from (exclusive) to r_to (inclusive): a uniform
// ladder plus geometrically clustered nodes across every winding window. A
// sweep much narrower than the uniform spacing would otherwise slip through
// a single step as a full turn, which the wrapped increment cannot see.
inline std::vector<double> ladder_targets(
    double r_from, double r_to, int steps,
    const std::vector<WindingWindow>& windows) {
  std::vector<double> t;
  for (int s = 1; s <= steps; ++s)
    t.push_back(r_from + (r_to - r_from) * (static_cast<double>(s) / steps));
  const double base_gap = std::abs(r_to - r_from) / steps;
  const double lo = std::min(r_from, r_to), hi = std::max(r_from, r_to);
  auto admit = [&](double x) {
    if (x > lo && x < hi) t.push_back(x);
  };
  for (const WindingWindow& w : windows) {
    admit(w.center);
    for (double scale = 0.25 * w.scale; scale <= base_gap && scale > 0.0;
         scale *= 2.0) {
      admit(w.center - scale);
      admit(w.center + scale);
    }
  }
  std::sort(t.begin(), t.end());
  if (r_to < r_from) std::reverse(t.begin(), t.end());
  std::vector<double> out;
  for (double x : t)
    if (out.empty() || std::abs(x - out.back()) > 1e-14 * (1.0 + std::abs(x)))
      out.push_back(x);
  if (out.empty() || out.back() != r_to) out.push_back(r_to);
  return out;
}

// joint tracker for n_ladders matrix paths sharing one channel structure.
// Ladder 0 is matched against its own previous eigenvectors, the others
// against ladder 0 at the new node, so channel labels agree across ladders.
// A step is accepted only when every phase moved by less than 0.9 pi;
// otherwise the interval is bisected, recording every accepted node.
inline PhaseFamily track_family(const std::function<Mat(int, double)>& eval,
                                int n_ladders, Eigen::Index dim,
                                const std::vector<double>& targets,
                                int max_depth = 48) {
  PhaseFamily fam;
  fam.theta.assign(static_cast<std::size_t>(n_ladders), {});
  fam.nodes.push_back(0.0);
  for (std::size_t l = 0; l < fam.theta.size(); ++l)
    fam.theta[l].push_back(RVec::Zero(dim));
  if (dim == 0 || targets.empty() || n_ladders == 0) return fam;

  TrackState cur;
  cur.theta.assign(static_cast<std::size_t>(n_ladders), RVec::Zero(dim));
  cur.vec.assign(static_cast<std::size_t>(n_ladders), Mat::Identity(dim, dim));

  std::function<TrackState(TrackState, double, double, int)> advance =
      [&](TrackState from, double ra, double rb, int depth) -> TrackState {
    TrackState next;
    next.theta.assign(from.theta.size(), RVec(dim));
    next.vec.assign(from.vec.size(), Mat(dim, dim));
    bool ok = true;
    for (std::size_t l = 0; l < from.theta.size() && ok; ++l) {
      const EigPair ep = unitary_eig(eval(static_cast<int>(l), rb));
      const Mat& ref = l == 0 ? from.vec[0] : next.vec[0];
      const auto pick = match_channels(ref, ep.vectors);
      for (Eigen::Index j = 0; j < dim; ++j) {
        const double prev = from.theta[l](j);
        const double delta =
            wrap_pi(std::arg(ep.values(pick[static_cast<std::size_t>(j)])) -
                    prev);
        if (std::abs(delta) > 0.9 * M_PI) {
          ok = false;
          break;
        }
        next.theta[l](j) = prev + delta;
        next.vec[l].col(j) = ep.vectors.col(pick[static_cast<std::size_t>(j)]);
      }
    }
    if (ok) {
      fam.nodes.push_back(rb);
      for (std::size_t l = 0; l < next.theta.size(); ++l)
        fam.theta[l].push_back(next.theta[l]);
      return next;
    }
    if (depth <= 0)
      throw std::runtime_error("branch tracking failed near resonance");
    const double rm = 0.5 * (ra + rb);
    if (!(std::min(ra, rb) < rm && rm < std::max(ra, rb)))
      throw std::runtime_error("branch tracking failed near resonance");
    TrackState mid = advance(std::move(from), ra, rm, depth - 1);
    return advance(std::move(mid), rm, rb, depth - 1);
  };

  double prev = 0.0;
  for (double target : targets) {
    cur = advance(std::move(cur), prev, target, max_depth);
    prev = target;
  }
  return fam;
}

// the scattering matrix is analytic across a real resonance; when a ladder
// node lands inside the certification window, step just past it
inline Mat fiber_s_step_over(const LambdaContext& ctx, double r) {
  double rr = r;
  double delta = 1e-9 * (1.0 + std::abs(r));
  for (int i = 0;
       i < 48 && sigma_min_core(ctx, rr - ctx.base_r) <= kResonanceEps; ++i) {
    rr = r + delta;
    delta *= 2.0;
  }
  return scattering_stationary(ctx, rr).s;
}

// same matrix whose eigenvalues s_tilde_core_eigenvalues reports
inline Mat s_tilde_core_matrix(const RegularizedCore& rc, double r) {
  const Eigen::Index k = rc.gamma.size();
  if (k == 0) return Mat(0, 0);
  const Mat lhs = Mat::Identity(k, k) +
                  r * rc.m * rc.gamma.cast<cplx>().asDiagonal();
  return Mat::Identity(k, k) -
         cplx(0.0, 2.0 * r) * rc.gamma.cast<cplx>().asDiagonal() *
             lhs.partialPivLu().solve(rc.n);
}

// floor-count estimators on a uniform angle grid. Grid points that land
// within 1e-9 of a phase (mod 2 pi) are nudged by 1e-6 so both families see
// every phase on the same side, which is what makes the difference of the
// two counts an exact integer.
struct MuGrid {
  RVec grid;
  std::vector<long> mu_a;
  std::vector<long> mu;
  int nudges = 0;
};

inline MuGrid mu_on_grid(const std::vector<double>& star,
                         const std::vector<double>& tilde, int grid_size) {
  MuGrid out;
  out.grid = RVec(grid_size);
  out.mu_a.resize(static_cast<std::size_t>(grid_size));
  out.mu.resize(static_cast<std::size_t>(grid_size));
  const double two_pi = 2.0 * M_PI;
  for (int m = 0; m < grid_size; ++m) {
    double theta = two_pi * m / grid_size;
    // clash window must dominate the noise of the extrapolated phases
    // (~1e-8 near tight spectral gaps) and the nudge must clear the window
    for (int guard = 0; guard < 8; ++guard) {
      bool clash = false;
      for (double p : star)
        clash = clash || std::abs(wrap_pi(theta - p)) < 1e-6;
      for (double p : tilde)
        clash = clash || std::abs(wrap_pi(theta - p)) < 1e-6;
      if (!clash) break;
      theta += 1e-5;
      ++out.nudges;
    }
    long a = 0, t = 0;
    for (double p : star)
      a -= static_cast<long>(std::floor((theta - p) / two_pi));
    for (double p : tilde)
      t -= static_cast<long>(std::floor((theta - p) / two_pi));
    out.grid(m) = theta;
    out.mu_a[static_cast<std::size_t>(m)] = a;
    out.mu[static_cast<std::size_t>(m)] = t;
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// winding counts against the angle grid

struct MuProfile {
  double lambda = 0.0;
  double r_end = 0.0;
  double y_base = 0.0;
  RVec theta_grid;                      // angles used, after collision nudges
  std::vector<long> mu_a;               // fiber-family count per angle
  std::vector<long> mu;                 // characteristic-family count
  long mu_s = 0;                        // their (constant) difference
  std::vector<double> theta_star_end;   // fiber eigenphases at r_end
  std::vector<double> theta_tilde_end;  // extrapolated phases, kept channels
  std::vector<Eigen::Index> dropped_channels;
  PhaseFamily star_path;
  PhaseFamily tilde_path;               // raw ladders at y_base * {1, 2, 4}
  std::vector<RVec> tilde_limit;        // per node, extrapolated to y -> 0
  int grid_nudges = 0;
};

inline MuProfile mu_invariants(const LambdaContext& ctx, double r_end,
                               int theta_grid_size = 64, int r_steps = 256,
                               double y_base = 1e-6) {
  if (ctx.base_r != 0.0)
    throw std::invalid_argument(
        "mu_invariants: context must be based at coupling zero");
  if (theta_grid_size < 2 || r_steps < 1 || !(y_base > 0.0))
    throw std::invalid_argument("mu_invariants: bad discretization");
  MuProfile out;
  out.lambda = ctx.lambda;
  out.r_end = r_end;
  out.y_base = y_base;
  const Eigen::Index d = ctx.fiber_base.d;
  const Eigen::Index k = ctx.k();

  auto star_eval = [&ctx](int, double r) {
    return detail::fiber_s_step_over(ctx, r);
  };
  const std::vector<detail::WindingWindow> star_win =
      detail::winding_windows(ctx.gamma, ctx.m_base, 0.0, r_end);
  out.star_path = detail::track_family(
      star_eval, 1, d, detail::ladder_targets(0.0, r_end, r_steps, star_win));

  const std::array<RegularizedCore, 3> rc = {
      regularized_core(ctx, y_base), regularized_core(ctx, 2.0 * y_base),
      regularized_core(ctx, 4.0 * y_base)};
  auto tilde_eval = [&rc](int l, double r) {
    return detail::s_tilde_core_matrix(rc[static_cast<std::size_t>(l)], r);
  };
  std::vector<detail::WindingWindow> tilde_win;
  for (const RegularizedCore& c : rc) {
    const auto w = detail::winding_windows(ctx.gamma, c.m, 0.0, r_end);
    tilde_win.insert(tilde_win.end(), w.begin(), w.end());
  }
  out.tilde_path = detail::track_family(
      tilde_eval, 3, k, detail::ladder_targets(0.0, r_end, r_steps, tilde_win));

  // Richardson in the regularization height: nodes y, 2y, 4y -> limit 0
  const std::size_t n_nodes = out.tilde_path.nodes.size();
  out.tilde_limit.reserve(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i)
    out.tilde_limit.push_back((8.0 / 3.0) * out.tilde_path.theta[0][i] -
                              2.0 * out.tilde_path.theta[1][i] +
                              (1.0 / 3.0) * out.tilde_path.theta[2][i]);

  // channels that never leave zero carry no spectral weight
  for (Eigen::Index j = 0; j < k; ++j) {
    double peak = 0.0;
    for (const RVec& th : out.tilde_limit)
      peak = std::max(peak, std::abs(th(j)));
    if (peak < 1e-9)
      out.dropped_channels.push_back(j);
    else
      out.theta_tilde_end.push_back(out.tilde_limit.back()(j));
  }
  for (Eigen::Index j = 0; j < d; ++j)
    out.theta_star_end.push_back(out.star_path.theta[0].back()(j));

  const detail::MuGrid mg = detail::mu_on_grid(
      out.theta_star_end, out.theta_tilde_end, theta_grid_size);
  out.theta_grid = mg.grid;
  out.mu_a = mg.mu_a;
  out.mu = mg.mu;
  out.grid_nudges = mg.nudges;
  out.mu_s = out.mu[0] - out.mu_a[0];
  for (std::size_t m = 0; m < out.mu.size(); ++m)
    if (out.mu[m] - out.mu_a[m] != out.mu_s)
      throw std::logic_error(
          "mu invariants: singular component varies over the angle grid");
  return out;
}

// ---------------------------------------------------------------------------
// absolutely continuous part, two independent routes

struct XiIntegral {
  double value = 0.0;
  double est_error = 0.0;
  bool converged = true;
};

namespace detail {

struct SimpsonAcc {
  double err = 0.0;
  bool converged = true;
};

template <typename Fn>
double simpson_refine(const Fn& f, double a, double fa, double m, double fm,
                      double b, double fb, double whole, double tol, int depth,
                      SimpsonAcc& acc) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double diff = left + right - whole;
  if (std::abs(diff) <= 15.0 * tol) {
    acc.err += std::abs(diff) / 15.0;
    return left + right + diff / 15.0;
  }
  if (depth <= 0) {
    acc.err += std::abs(diff);
    acc.converged = false;
    return left + right + diff / 15.0;
  }
  return simpson_refine(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1,
                        acc) +
         simpson_refine(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1,
                        acc);
}

}  // namespace detail

// integral of the generator trace from the base coupling to r1, with the
// same resonance-window bridging the product-integral route uses
inline XiIntegral xi_ac_integral(const LambdaContext& ctx, double r1,
                                 int s_steps = 16, double tol = 1e-8) {
  if (s_steps < 1 || !(tol > 0.0))
    throw std::invalid_argument("xi_ac_integral: bad quadrature parameters");
  XiIntegral out;
  const double lo = std::min(ctx.base_r, r1), hi = std::max(ctx.base_r, r1);
  if (lo == hi || ctx.fiber_base.d == 0 || ctx.k() == 0) return out;
  const double pad = 2e-2 * (hi - lo);
  const std::vector<double> res =
      detail::resonance_locations(ctx, lo - pad, hi + pad);
  const TexpIntegrand integrand(ctx, res, (hi - lo) / 128.0);
  auto g = [&integrand](double s) {
    return std::real(integrand(s).trace()) / (2.0 * M_PI);
  };
  std::vector<detail::WindingWindow> win =
      detail::winding_windows(ctx.gamma, ctx.m_base, 0.0, r1 - ctx.base_r);
  for (detail::WindingWindow& w : win) w.center += ctx.base_r;
  const std::vector<double> panels =
      detail::ladder_targets(ctx.base_r, r1, s_steps, win);
  detail::SimpsonAcc acc;
  double a = ctx.base_r;
  double fa = g(a);
  const double panel_tol = tol / static_cast<double>(panels.size());
  for (double b : panels) {
    const double m = 0.5 * (a + b);
    const double fm = g(m), fb = g(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    out.value += detail::simpson_refine(g, a, fa, m, fm, b, fb, whole,
                                        panel_tol, 14, acc);
    a = b;
    fa = fb;
  }
  out.est_error = acc.err;
  out.converged = acc.converged;
  return out;
}

// determinant branch of the fiber scattering matrix along the coupling; a
// step is accepted only when the determinant moved by less than a sixth of
// the circle, so the wrapped increment is the true one
inline double xi_ac_logdet(const LambdaContext& ctx, double r1,
                           int r_steps = 256) {
  if (r_steps < 1)
    throw std::invalid_argument("xi_ac_logdet: bad ladder size");
  if (ctx.fiber_base.d == 0 || r1 == ctx.base_r) return 0.0;
  std::function<double(double, cplx, double, cplx, int)> span =
      [&](double ra, cplx da, double rb, cplx db, int depth) -> double {
    if (std::abs(db - da) < 1.0)
      return detail::wrap_pi(std::arg(db) - std::arg(da));
    if (depth <= 0)
      throw std::runtime_error("branch tracking failed near resonance");
    const double rm = 0.5 * (ra + rb);
    if (!(std::min(ra, rb) < rm && rm < std::max(ra, rb)))
      throw std::runtime_error("branch tracking failed near resonance");
    const cplx dm = detail::fiber_s_step_over(ctx, rm).determinant();
    return span(ra, da, rm, dm, depth - 1) + span(rm, dm, rb, db, depth - 1);
  };
  std::vector<detail::WindingWindow> win =
      detail::winding_windows(ctx.gamma, ctx.m_base, 0.0, r1 - ctx.base_r);
  for (detail::WindingWindow& w : win) w.center += ctx.base_r;
  double arg_total = 0.0;
  double prev_r = ctx.base_r;
  cplx prev_d = 1.0;
  for (double rb : detail::ladder_targets(ctx.base_r, r1, r_steps, win)) {
    const cplx db = detail::fiber_s_step_over(ctx, rb).determinant();
    arg_total += span(prev_r, prev_d, rb, db, 40);
    prev_r = rb;
    prev_d = db;
  }
  return -arg_total / (2.0 * M_PI);
}

// ---------------------------------------------------------------------------
// the shift split at one energy

struct SSFPoint {
  double lambda = 0.0;
  double r_end = 0.0;
  double xi_a = 0.0;           // grid estimator from the fiber family
  double xi_total = 0.0;       // grid estimator from the full family
  double xi_s = 0.0;           // xi_total - xi_a, an integer when clean
  double xi_a_integral = 0.0;  // generator-trace route
  double xi_a_route2 = 0.0;    // determinant-branch route
  double nearest_int_dist = 0.0;
  std::vector<double> resonances_crossed;
  double est_error = 0.0;
  bool reliable = true;
};

inline SSFPoint ssf_point(const LambdaContext& ctx, double r_end,
                          int theta_grid_size = 64, int r_steps = 256,
                          int s_steps = 16) {
  SSFPoint out;
  out.lambda = ctx.lambda;
  out.r_end = r_end;
  const MuProfile prof =
      mu_invariants(ctx, r_end, theta_grid_size, r_steps);
  auto grid_mean = [](const std::vector<long>& v) {
    long sum = 0;
    for (long x : v) sum += x;
    return static_cast<double>(sum) / static_cast<double>(v.size());
  };
  out.xi_a = -grid_mean(prof.mu_a);
  out.xi_total = -grid_mean(prof.mu);
  out.xi_s = out.xi_total - out.xi_a;
  out.nearest_int_dist = std::abs(out.xi_s - std::round(out.xi_s));
  const XiIntegral integral = xi_ac_integral(ctx, r_end, s_steps);
  out.xi_a_integral = integral.value;
  out.xi_a_route2 = xi_ac_logdet(ctx, r_end, r_steps);
  out.resonances_crossed = detail::resonance_locations(
      ctx, std::min(0.0, r_end), std::max(0.0, r_end));
  // doubling the angle grid rechecks the estimator without retracking
  const detail::MuGrid fine = detail::mu_on_grid(
      prof.theta_star_end, prof.theta_tilde_end, 2 * theta_grid_size);
  const double xi_total_fine = -grid_mean(fine.mu);
  out.est_error =
      std::max(std::abs(xi_total_fine - out.xi_total), integral.est_error);
  out.reliable = integral.converged &&
                 std::abs(out.xi_a_integral - out.xi_a_route2) <= 1e-4;
  return out;
}

// ---------------------------------------------------------------------------
// trace identity on finite models

struct TraceCheckResult {
  double lhs = 0.0;  // Tr(f(H_1) - f(H_0))
  double rhs = 0.0;  // integral of f' against the shift function
  double residual = 0.0;
  std::vector<double> grid;  // cell midpoints used
  std::vector<double> xi;    // shift values there
};

namespace detail {

// real-axis sandwich for a finite model strictly between eigenvalues
inline Mat real_axis_boundary(const FiniteHermitian& fh, const Frame& frame,
                              double lambda) {
  const Eigen::Index n = frame.dim();
  const Mat lhs = fh.h - cplx(lambda, 0.0) * Mat::Identity(n, n);
  Mat rhs = Mat::Zero(n, n);
  rhs.diagonal() = frame.weights.cast<cplx>();
  const Mat x = lhs.partialPivLu().solve(rhs);
  return frame.weights.cast<cplx>().asDiagonal() * x;
}

// context for the counting route; a point the boundary ladder cannot certify
// falls back to the exact real-axis matrix with an empty fiber
inline LambdaContext counting_context(const OperatorModel& model,
                                      const Frame& frame,
                                      const Perturbation& pert, double lambda,
                                      double rel_tol = 1e-8) {
  try {
    return make_context(model, frame, pert, lambda, rel_tol);
  } catch (const std::domain_error&) {
    const auto* fh = std::get_if<FiniteHermitian>(&model);
    if (!fh) throw;
    Mat t0 = real_axis_boundary(*fh, frame, lambda);
    if (!t0.allFinite()) throw;
    FiberLite fiber;
    fiber.s = 0.0;
    fiber.b = Mat::Zero(frame.dim(), 0);
    fiber.alpha = RVec(0);
    fiber.d = 0;
    return assemble_context(model, frame, pert, lambda, std::move(t0),
                            std::move(fiber), 0.0, rel_tol);
  }
}

}  // namespace detail

// residual of Tr(f(H_1) - f(H_0)) against the shift function integrated by
// cells. The shift function is constant between consecutive eigenvalues of
// the pair, so one midpoint value per cell and the exact increment of f over
// the cell integrate f' xi without quadrature error.
template <typename F>
TraceCheckResult krein_trace_check(const FiniteHermitian& fh,
                                   const Frame& frame,
                                   const Perturbation& pert, F&& f,
                                   const std::vector<double>& cell_bounds,
                                   int theta_grid_size = 64,
                                   int r_steps = 256) {
  if (cell_bounds.size() < 2)
    throw std::invalid_argument("krein_trace_check: need at least one cell");
  TraceCheckResult out;
  Eigen::SelfAdjointEigenSolver<Mat> e0(fh.h);
  Eigen::SelfAdjointEigenSolver<Mat> e1(
      perturbed_matrix(fh, frame, pert, 1.0));
  for (Eigen::Index i = 0; i < fh.h.rows(); ++i)
    out.lhs += f(e1.eigenvalues()(i)) - f(e0.eigenvalues()(i));
  const OperatorModel model = fh;
  for (std::size_t c = 0; c + 1 < cell_bounds.size(); ++c) {
    const double a = cell_bounds[c], b = cell_bounds[c + 1];
    if (!(b > a))
      throw std::invalid_argument(
          "krein_trace_check: cell bounds must increase");
    const double mid = 0.5 * (a + b);
    const LambdaContext ctx = detail::counting_context(model, frame, pert, mid);
    const MuProfile prof = mu_invariants(ctx, 1.0, theta_grid_size, r_steps);
    long sum = 0;
    for (long v : prof.mu) sum += v;
    const double xi =
        -static_cast<double>(sum) / static_cast<double>(prof.mu.size());
    out.grid.push_back(mid);
    out.xi.push_back(xi);
    out.rhs += xi * (f(b) - f(a));
  }
  out.residual = std::abs(out.lhs - out.rhs);
  return out;
}

// convenience overload: cells between consecutive eigenvalues of the pair,
// with near-coincident breakpoints merged
template <typename F>
TraceCheckResult krein_trace_check(const FiniteHermitian& fh,
                                   const Frame& frame,
                                   const Perturbation& pert, F&& f,
                                   int theta_grid_size = 64,
                                   int r_steps = 256) {
  std::vector<double> bounds;
  Eigen::SelfAdjointEigenSolver<Mat> e0(fh.h);
  Eigen::SelfAdjointEigenSolver<Mat> e1(
      perturbed_matrix(fh, frame, pert, 1.0));
  for (Eigen::Index i = 0; i < fh.h.rows(); ++i) {
    bounds.push_back(e0.eigenvalues()(i));
    bounds.push_back(e1.eigenvalues()(i));
  }
  std::sort(bounds.begin(), bounds.end());
  std::vector<double> cells;
  for (double b : bounds)
    if (cells.empty() || b - cells.back() > 1e-7) cells.push_back(b);
  return krein_trace_check(fh, frame, pert, std::forward<F>(f), cells,
                           theta_grid_size, r_steps);
}

}  // namespace krein
