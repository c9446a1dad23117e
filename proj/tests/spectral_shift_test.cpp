#include <krein/spectral_shift.hpp>

#include <gtest/gtest.h>

#include <krein/random.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

namespace krein {
namespace {

Frame unit_frame(Eigen::Index n) {
  Frame f;
  f.weights = RVec::Ones(n);
  f.tail_bound = 0.0;
  return f;
}

MultiplicationGrid demo_grid() {
  MultiplicationGrid g;
  g.nodes = RVec(4);
  g.nodes << -1.0, -0.2, 0.5, 1.4;
  g.densities = RVec(4);
  g.densities << 0.3, 1.0, 0.8, 0.2;
  return g;
}

// rank-one coupling on the cell containing lambda; every shift quantity has
// a closed form through the scalar boundary value t
struct RankOneGrid {
  Frame frame;
  Perturbation pert;
  OperatorModel model;
  double lambda = 0.1;
  double gamma = 0.7;
  LambdaContext ctx;
  cplx t;
};

RankOneGrid rank_one_grid() {
  RankOneGrid s;
  s.model = demo_grid();
  s.frame = unit_frame(3);
  s.pert.j = Mat::Zero(3, 3);
  s.pert.j(1, 1) = s.gamma;
  s.ctx = make_context(s.model, s.frame, s.pert, s.lambda);
  s.t = s.ctx.t_base(1, 1);
  return s;
}

double closed_form_xi_a(const RankOneGrid& s, double r) {
  return std::arg(1.0 + r * s.gamma * s.t) / M_PI;
}

struct JacobiSetup {
  Frame frame;
  Perturbation pert;
  OperatorModel model = FreeJacobi{};
};

JacobiSetup jacobi_setup(Eigen::Index n, Eigen::Index rank, uint64_t seed) {
  JacobiSetup s;
  s.frame = Frame::geometric(n);
  s.pert = Perturbation::random_rank(n, rank, seed);
  return s;
}

// boundary kernel coupling: invisible to the fiber, resonant at r_star
struct EmbeddedSetup {
  Frame frame;
  Perturbation pert;
  OperatorModel model = FreeJacobi{};
  double lambda = 0.6;
  double r_star = 0.0;
};

EmbeddedSetup embedded_setup(Eigen::Index n) {
  EmbeddedSetup s;
  s.frame = Frame::geometric(n);
  const Mat t0 = t0_boundary_closed(s.model, s.frame, s.lambda);
  const EigenSystem im_eig = hermitian_eig(hermitian_part(imag_part(t0)));
  Vec u;
  double best = 0.0;
  for (Eigen::Index q = 0; q < n; ++q) {
    if (std::abs(im_eig.values(q)) > 1e-12) continue;
    const Vec cand = im_eig.vectors.col(q);
    const cplx quad = (cand.adjoint() * t0 * cand)(0, 0);
    if (std::abs(quad.real()) > best) {
      best = std::abs(quad.real());
      u = cand;
    }
  }
  s.pert.j = u * u.adjoint();
  s.r_star = -1.0 / (u.adjoint() * t0 * u)(0, 0).real();
  return s;
}

long count_below(const RVec& eigs, double lambda) {
  long n = 0;
  for (Eigen::Index i = 0; i < eigs.size(); ++i)
    if (eigs(i) <= lambda) ++n;
  return n;
}

TEST(TrackFamily, QuadraticSweepRefinesUntilResolved) {
  // phase -4 r^2 moves by 3 radians across the second base step, which is
  // beyond the acceptance window, so the tracker must bisect to follow it
  auto eval = [](int, double r) {
    Mat m(1, 1);
    m(0, 0) = std::polar(1.0, -4.0 * r * r);
    return m;
  };
  const PhaseFamily fam =
      detail::track_family(eval, 1, 1, detail::ladder_targets(0.0, 1.0, 2, {}));
  EXPECT_NEAR(fam.theta[0].back()(0), -4.0, 1e-12);
  EXPECT_GT(fam.nodes.size(), 3u);
}

TEST(TrackFamily, LaddersKeepIndependentWindings) {
  auto eval = [](int l, double r) {
    Mat m(1, 1);
    m(0, 0) = std::polar(1.0, -2.0 * M_PI * (l + 1) * r);
    return m;
  };
  const PhaseFamily fam = detail::track_family(
      eval, 3, 1, detail::ladder_targets(0.0, 1.0, 16, {}));
  EXPECT_NEAR(fam.theta[0].back()(0), -2.0 * M_PI, 1e-12);
  EXPECT_NEAR(fam.theta[1].back()(0), -4.0 * M_PI, 1e-12);
  EXPECT_NEAR(fam.theta[2].back()(0), -6.0 * M_PI, 1e-12);
}

TEST(TrackFamily, NarrowWindingResolvedThroughClusteredNodes) {
  // a full turn confined to a window of width 1e-6 sits far below the base
  // spacing, so only the clustered nodes let the tracker see it at all
  const double c = 0.43, w = 1e-6;
  auto eval = [&](int, double r) {
    Mat m(1, 1);
    m(0, 0) = std::polar(
        1.0, -2.0 * (std::atan((r - c) / w) - std::atan((0.0 - c) / w)));
    return m;
  };
  const PhaseFamily fam = detail::track_family(
      eval, 1, 1, detail::ladder_targets(0.0, 1.0, 16, {{c, w}}));
  EXPECT_NEAR(fam.theta[0].back()(0), -2.0 * M_PI, 1e-4);
}

TEST(MuInvariants, RankOneGridMatchesClosedForm) {
  const RankOneGrid s = rank_one_grid();
  const double r_end = 2.0;
  const MuProfile prof = mu_invariants(s.ctx, r_end, 64, 128);
  ASSERT_EQ(prof.theta_tilde_end.size(), 1u);
  ASSERT_EQ(prof.theta_star_end.size(), 1u);
  const double theta_exact = -2.0 * std::arg(1.0 + r_end * s.gamma * s.t);
  EXPECT_NEAR(prof.theta_tilde_end[0], theta_exact, 1e-8);
  EXPECT_NEAR(prof.theta_star_end[0], theta_exact, 1e-8);
  EXPECT_EQ(prof.mu_s, 0);
  EXPECT_TRUE(prof.dropped_channels.empty());
}

TEST(MuInvariants, RejectsBadParameters) {
  const RankOneGrid s = rank_one_grid();
  EXPECT_THROW(mu_invariants(s.ctx, 1.0, 1, 128), std::invalid_argument);
  EXPECT_THROW(mu_invariants(s.ctx, 1.0, 64, 0), std::invalid_argument);
  EXPECT_THROW(mu_invariants(s.ctx, 1.0, 64, 128, 0.0),
               std::invalid_argument);
  const LambdaContext moved = make_rebased(s.ctx, 0.3);
  EXPECT_THROW(mu_invariants(moved, 1.0), std::invalid_argument);
  EXPECT_THROW(ssf_point(moved, 1.0), std::invalid_argument);
}

TEST(SSFPoint, RankOneGridClosedForm) {
  const RankOneGrid s = rank_one_grid();
  const double r_end = 2.0;
  const SSFPoint p = ssf_point(s.ctx, r_end, 64, 128);
  const double xi_a_exact = closed_form_xi_a(s, r_end);
  EXPECT_NEAR(p.xi_a_integral, xi_a_exact, 1e-7);
  EXPECT_NEAR(p.xi_a_route2, xi_a_exact, 1e-9);
  // the angle-grid estimator carries one grid cell of bias per channel
  EXPECT_NEAR(p.xi_a, xi_a_exact, 1.0 / 64 + 1e-9);
  EXPECT_DOUBLE_EQ(p.xi_s, 0.0);
  EXPECT_LT(p.nearest_int_dist, 1e-12);
  EXPECT_TRUE(p.resonances_crossed.empty());
  EXPECT_TRUE(p.reliable);
  EXPECT_LT(p.est_error, 0.05);
}

TEST(SSFPoint, BandPointRoutesAgree) {
  const auto setup = jacobi_setup(60, 2, 311);
  const double lambda = 0.47, r_end = 0.9;
  const auto ctx = make_context(setup.model, setup.frame, setup.pert, lambda);
  const SSFPoint p = ssf_point(ctx, r_end);
  EXPECT_NEAR(p.xi_a_integral, p.xi_a_route2, 1e-6);
  EXPECT_NEAR(p.xi_a, p.xi_a_integral, 2.0 / 64 + 1e-6);
  EXPECT_DOUBLE_EQ(p.xi_s, 0.0);
  EXPECT_LT(p.nearest_int_dist, 1e-9);
  EXPECT_TRUE(p.resonances_crossed.empty());
  EXPECT_TRUE(p.reliable);

  // the determinant identity, with the shift assembled from its parts
  const cplx det_s = scattering_stationary(ctx, r_end).s.determinant();
  EXPECT_LT(std::abs(std::polar(1.0, -2.0 * M_PI * p.xi_a_route2) - det_s),
            1e-9);
  EXPECT_LT(std::abs(std::polar(1.0, -2.0 * M_PI * (p.xi_s + p.xi_a_integral)) -
                     det_s),
            1e-6);

  // the raw grid estimator reaches the identity once the grid is fine enough
  const MuProfile prof = mu_invariants(ctx, r_end);
  const detail::MuGrid fine = detail::mu_on_grid(
      prof.theta_star_end, prof.theta_tilde_end, 4096);
  long sum = 0;
  for (long v : fine.mu) sum += v;
  const double xi_total_fine = -static_cast<double>(sum) / 4096.0;
  EXPECT_LT(std::abs(std::polar(1.0, -2.0 * M_PI * xi_total_fine) - det_s),
            1e-2);
}

TEST(MuInvariants, SingularComponentConstantAcrossGrid) {
  const auto setup = jacobi_setup(60, 2, 311);
  const auto ctx = make_context(setup.model, setup.frame, setup.pert, 0.47);
  const MuProfile prof = mu_invariants(ctx, 0.9);
  ASSERT_EQ(prof.mu.size(), prof.mu_a.size());
  for (std::size_t m = 0; m < prof.mu.size(); ++m)
    EXPECT_EQ(prof.mu[m] - prof.mu_a[m], prof.mu_s);
}

TEST(Additivity, CouplingChainAddsShift) {
  const auto setup = jacobi_setup(50, 2, 421);
  const auto ctx = make_context(setup.model, setup.frame, setup.pert, -0.33);
  const LambdaContext half = make_rebased(ctx, 0.5);
  const double whole = xi_ac_integral(ctx, 1.0).value;
  const double split =
      xi_ac_integral(ctx, 0.5).value + xi_ac_integral(half, 1.0).value;
  EXPECT_NEAR(whole, split, 1e-6);
  const double whole_det = xi_ac_logdet(ctx, 1.0);
  const double split_det = xi_ac_logdet(ctx, 0.5) + xi_ac_logdet(half, 1.0);
  EXPECT_NEAR(whole_det, split_det, 1e-9);
  EXPECT_NEAR(whole, whole_det, 1e-6);
}

TEST(EmbeddedFlow, PurelySingularUnitJump) {
  const EmbeddedSetup s = embedded_setup(40);
  ASSERT_GT(s.r_star, 0.0);
  const auto ctx = make_context(s.model, s.frame, s.pert, s.lambda);

  const SSFPoint before = ssf_point(ctx, 0.9 * s.r_star);
  EXPECT_DOUBLE_EQ(before.xi_s, 0.0);
  EXPECT_DOUBLE_EQ(before.xi_a, 0.0);
  EXPECT_TRUE(before.resonances_crossed.empty());

  const SSFPoint after = ssf_point(ctx, 1.15 * s.r_star);
  EXPECT_DOUBLE_EQ(after.xi_a, 0.0);
  EXPECT_NEAR(after.xi_a_integral, 0.0, 1e-9);
  EXPECT_NEAR(after.xi_a_route2, 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(std::abs(after.xi_s), 1.0);
  EXPECT_DOUBLE_EQ(after.nearest_int_dist, 0.0);
  ASSERT_EQ(after.resonances_crossed.size(), 1u);
  EXPECT_NEAR(after.resonances_crossed[0], s.r_star, 1e-6 * s.r_star);
}

TEST(FiniteCounting, EigenvalueCrossingsAreCounted) {
  const Eigen::Index n = 12;
  Rng rng(77);
  FiniteHermitian fh{rng.hermitian(n)};
  const Frame frame = unit_frame(n);
  const Perturbation pert = Perturbation::random_rank(n, 2, 501);
  Eigen::SelfAdjointEigenSolver<Mat> e0(fh.h);
  Eigen::SelfAdjointEigenSolver<Mat> e1(perturbed_matrix(fh, frame, pert, 1.0));
  std::vector<double> all;
  for (Eigen::Index i = 0; i < n; ++i) {
    all.push_back(e0.eigenvalues()(i));
    all.push_back(e1.eigenvalues()(i));
  }
  std::sort(all.begin(), all.end());
  // widest cell whose counting difference is nonzero, midpoint evaluation
  double lambda = 0.0, width = -1.0;
  long expected = 0;
  for (std::size_t i = 0; i + 1 < all.size(); ++i) {
    const double mid = 0.5 * (all[i] + all[i + 1]);
    const double w = all[i + 1] - all[i];
    const long diff =
        count_below(e0.eigenvalues(), mid) - count_below(e1.eigenvalues(), mid);
    if (diff != 0 && w > width) {
      width = w;
      lambda = mid;
      expected = diff;
    }
  }
  ASSERT_GT(width, 0.05);

  const auto ctx = detail::counting_context(fh, frame, pert, lambda);
  EXPECT_EQ(ctx.fiber_base.d, 0);
  const SSFPoint p = ssf_point(ctx, 1.0);
  EXPECT_DOUBLE_EQ(p.xi_total, static_cast<double>(expected));
  EXPECT_DOUBLE_EQ(p.xi_s, static_cast<double>(expected));
  EXPECT_DOUBLE_EQ(p.xi_a, 0.0);
  EXPECT_DOUBLE_EQ(p.xi_a_integral, 0.0);
  EXPECT_DOUBLE_EQ(p.xi_a_route2, 0.0);
  EXPECT_DOUBLE_EQ(p.nearest_int_dist, 0.0);
}

TEST(FiniteCounting, NearSpectrumPointStillCounts) {
  const Eigen::Index n = 12;
  Rng rng(77);
  FiniteHermitian fh{rng.hermitian(n)};
  const Frame frame = unit_frame(n);
  const Perturbation pert = Perturbation::random_rank(n, 2, 501);
  Eigen::SelfAdjointEigenSolver<Mat> e0(fh.h);
  Eigen::SelfAdjointEigenSolver<Mat> e1(perturbed_matrix(fh, frame, pert, 1.0));
  std::vector<double> all;
  for (Eigen::Index i = 0; i < n; ++i) {
    all.push_back(e0.eigenvalues()(i));
    all.push_back(e1.eigenvalues()(i));
  }
  // a point a few thousandths above an eigenvalue, clear of all the others
  double lambda = 0.0;
  bool found = false;
  for (double e : all) {
    const double cand = e + 0.004;
    double dist = 1e300;
    for (double other : all) dist = std::min(dist, std::abs(cand - other));
    if (dist >= 0.0035) {
      lambda = cand;
      found = true;
      break;
    }
  }
  ASSERT_TRUE(found);
  const long expected =
      count_below(e0.eigenvalues(), lambda) - count_below(e1.eigenvalues(), lambda);

  const auto ctx = detail::counting_context(fh, frame, pert, lambda);
  EXPECT_EQ(ctx.fiber_base.d, 0);
  const SSFPoint p = ssf_point(ctx, 1.0);
  EXPECT_DOUBLE_EQ(p.xi_total, static_cast<double>(expected));
  EXPECT_DOUBLE_EQ(p.xi_a, 0.0);

  // the fallback boundary matrix agrees with the extrapolated one where the
  // ladder is healthy
  double safe = 0.0, width = -1.0;
  for (std::size_t i = 0; i + 1 < all.size(); ++i)
    if (all[i + 1] - all[i] > width) {
      width = all[i + 1] - all[i];
      safe = 0.5 * (all[i] + all[i + 1]);
    }
  const auto bd = boundary_resolvent(fh, frame, pert, 0.0, safe);
  const Mat direct = detail::real_axis_boundary(fh, frame, safe);
  EXPECT_LT(max_abs(bd.t0 - direct), 1e-6 * (1.0 + max_abs(direct)));
}

TEST(KreinTrace, GaussianResidualSmall) {
  const Eigen::Index n = 14;
  Rng rng(202);
  FiniteHermitian fh{rng.hermitian(n)};
  const Frame frame = unit_frame(n);
  const Perturbation pert = Perturbation::random_rank(n, 2, 203);
  auto f = [](double x) { return std::exp(-0.5 * (x - 0.3) * (x - 0.3) / 1.44); };
  const TraceCheckResult res = krein_trace_check(fh, frame, pert, f);
  EXPECT_LT(res.residual, 1e-4);
  EXPECT_FALSE(res.grid.empty());
  for (double xi : res.xi)
    EXPECT_DOUBLE_EQ(xi, std::round(xi));
}

TEST(KreinTrace, LinearFunctionRecoversPerturbationTrace) {
  const Eigen::Index n = 14;
  Rng rng(202);
  FiniteHermitian fh{rng.hermitian(n)};
  const Frame frame = unit_frame(n);
  const Perturbation pert = Perturbation::random_rank(n, 2, 203);
  auto f = [](double x) { return x; };
  const TraceCheckResult res = krein_trace_check(fh, frame, pert, f);
  const double tr_v =
      (perturbed_matrix(fh, frame, pert, 1.0) - fh.h).trace().real();
  EXPECT_NEAR(res.lhs, tr_v, 1e-10 * (1.0 + std::abs(tr_v)));
  EXPECT_LT(res.residual, 1e-8);
}

TEST(KreinTrace, RejectsDegenerateCells) {
  const Eigen::Index n = 6;
  Rng rng(55);
  FiniteHermitian fh{rng.hermitian(n)};
  const Frame frame = unit_frame(n);
  const Perturbation pert = Perturbation::random_rank(n, 1, 56);
  auto f = [](double x) { return x; };
  EXPECT_THROW(krein_trace_check(fh, frame, pert, f, std::vector<double>{1.0}),
               std::invalid_argument);
  EXPECT_THROW(krein_trace_check(fh, frame, pert, f,
                                 std::vector<double>{1.0, 0.0}),
               std::invalid_argument);
}

TEST(XiIntegral, DepthCapFlagsNonconvergence) {
  // an oscillation the shallow cap cannot resolve must be reported as such
  auto g = [](double x) { return std::sin(50.0 / (x + 0.01)); };
  detail::SimpsonAcc acc;
  const double fa = g(0.0), fm = g(0.5), fb = g(1.0);
  const double whole = (fa + 4.0 * fm + fb) / 6.0;
  detail::simpson_refine(g, 0.0, fa, 0.5, fm, 1.0, fb, whole, 1e-12, 3, acc);
  EXPECT_FALSE(acc.converged);
  EXPECT_GT(acc.err, 0.0);

  const RankOneGrid s = rank_one_grid();
  const XiIntegral strained = xi_ac_integral(s.ctx, 2.0, 1, 1e-16);
  EXPECT_NEAR(strained.value, closed_form_xi_a(s, 2.0), 1e-6);
  EXPECT_THROW(xi_ac_integral(s.ctx, 2.0, 0), std::invalid_argument);
  EXPECT_THROW(xi_ac_integral(s.ctx, 2.0, 16, 0.0), std::invalid_argument);
}

TEST(XiLogdet, HalvingTracksFastSweep) {
  const RankOneGrid s = rank_one_grid();
  // two base steps force the determinant across most of the circle per step
  const double r_end = 40.0;
  const double got = xi_ac_logdet(s.ctx, r_end, 2);
  EXPECT_NEAR(got, closed_form_xi_a(s, r_end), 1e-9);
  EXPECT_THROW(xi_ac_logdet(s.ctx, 1.0, 0), std::invalid_argument);
}

TEST(MuInvariants, DropsChannelsDecoupledFromTheFiber) {
  // second coupling channel lives on a cell that is real at lambda; its
  // regularized phase collapses to zero and it must not enter the counts
  RankOneGrid s = rank_one_grid();
  const double t00 = s.ctx.t_base(0, 0).real();
  Perturbation two;
  two.j = Mat::Zero(3, 3);
  two.j(1, 1) = s.gamma;
  two.j(0, 0) = 0.5 * (t00 > 0.0 ? 1.0 : -1.0);
  const auto ctx = make_context(s.model, s.frame, two, s.lambda);
  ASSERT_EQ(ctx.fiber_base.d, 1);
  ASSERT_EQ(ctx.k(), 2);
  const double r_end = 2.0;
  const MuProfile prof = mu_invariants(ctx, r_end, 64, 128);
  ASSERT_EQ(prof.dropped_channels.size(), 1u);
  ASSERT_EQ(prof.theta_tilde_end.size(), 1u);
  EXPECT_EQ(prof.mu_s, 0);
  const double theta_exact = -2.0 * std::arg(1.0 + r_end * s.gamma * s.t);
  EXPECT_NEAR(prof.theta_tilde_end[0], theta_exact, 1e-8);
}

}  // namespace
}  // namespace krein
