#pragma once
// Sweep orchestration: one record per (lambda, coupling) pair, CSV and JSON
// persistence, optional worker pool over lambda points. A point that fails
// anywhere is recorded in its row with a status message; the sweep itself
// never aborts and never writes a non-finite numeric cell.

#include <krein/config.hpp>
#include <krein/spectral_shift.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace krein {

struct ResultRecord {
  double lambda = 0.0;
  double r = 0.0;
  std::string status = "ok";
  Eigen::Index fiber_dim = 0;
  std::optional<double> unitarity_s;
  std::optional<double> unitarity_w_plus;
  std::optional<double> unitarity_w_minus;
  std::optional<double> route_gap;
  std::optional<double> det_identity_gap;
  std::optional<double> xi_a;
  std::optional<double> xi_total;
  std::optional<double> xi_s;
  std::optional<double> xi_a_integral;
  std::optional<double> xi_a_route2;
  std::optional<double> xi_route_gap;
  std::optional<double> nearest_int_dist;
  std::optional<double> est_error;
  std::vector<double> resonances;
  double tail_bound = 0.0;
};

namespace detail {

inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) {
  return v ? fmt_g(*v) : std::string();
}

// keep a value only while it is finite; otherwise poison the row status
inline std::optional<double> checked(double v, std::string& status,
                                     const char* what) {
  if (std::isfinite(v)) return v;
  if (status == "ok") status = std::string("non-finite ") + what;
  return std::nullopt;
}

inline void max_opt(std::optional<double>& acc,
                    const std::optional<double>& v) {
  if (v) acc = acc ? std::max(*acc, *v) : *v;
}

}  // namespace detail

// every (lambda, r) of the sweep, sequential in r within one lambda
inline ResultRecord sweep_point(const LambdaContext& ctx, double r,
                                const SweepConfig& cfg) {
  ResultRecord rec;
  rec.lambda = ctx.lambda;
  rec.r = r;
  rec.fiber_dim = ctx.fiber_base.d;
  rec.tail_bound = cfg.frame.tail_bound;
  try {
    std::vector<Mat> s_mats;
    for (ScatteringRoute route : cfg.routes) {
      switch (route) {
        case ScatteringRoute::stationary:
          s_mats.push_back(scattering_stationary(ctx, r).s);
          break;
        case ScatteringRoute::wave_product:
          s_mats.push_back(scattering_wave_product(ctx, r).s);
          break;
        default:
          s_mats.push_back(scattering_texp(ctx, r).s);
          break;
      }
    }
    const Eigen::Index d = ctx.fiber_base.d;
    const Mat eye = Mat::Identity(d, d);
    if (!s_mats.empty())
      rec.unitarity_s = detail::checked(
          max_abs(s_mats.front().adjoint() * s_mats.front() - eye),
          rec.status, "unitarity");
    double gap = 0.0;
    for (std::size_t a = 0; a < s_mats.size(); ++a)
      for (std::size_t b = a + 1; b < s_mats.size(); ++b)
        gap = std::max(gap, max_abs(s_mats[a] - s_mats[b]));
    if (s_mats.size() > 1)
      rec.route_gap = detail::checked(gap, rec.status, "route gap");

    const WaveMatrix wp = wave_matrix(ctx, ctx.base_r, r, +1);
    const WaveMatrix wm = wave_matrix(ctx, ctx.base_r, r, -1);
    rec.unitarity_w_plus = detail::checked(
        max_abs(wp.w.adjoint() * wp.w - eye), rec.status, "wave unitarity");
    rec.unitarity_w_minus = detail::checked(
        max_abs(wm.w.adjoint() * wm.w - eye), rec.status, "wave unitarity");

    const SSFPoint p = ssf_point(ctx, r, cfg.disc.theta_grid,
                                 cfg.disc.r_steps, cfg.disc.s_steps);
    rec.xi_a = detail::checked(p.xi_a, rec.status, "xi_a");
    rec.xi_total = detail::checked(p.xi_total, rec.status, "xi_total");
    rec.xi_s = detail::checked(p.xi_s, rec.status, "xi_s");
    rec.xi_a_integral =
        detail::checked(p.xi_a_integral, rec.status, "xi integral");
    rec.xi_a_route2 = detail::checked(p.xi_a_route2, rec.status, "xi logdet");
    rec.xi_route_gap = detail::checked(
        std::abs(p.xi_a_integral - p.xi_a_route2), rec.status, "xi gap");
    rec.nearest_int_dist =
        detail::checked(p.nearest_int_dist, rec.status, "integer distance");
    rec.est_error = detail::checked(p.est_error, rec.status, "error estimate");
    rec.resonances = p.resonances_crossed;
    if (!s_mats.empty()) {
      const cplx det = s_mats.front().determinant();
      const cplx predicted =
          std::exp(cplx(0.0, -2.0 * M_PI * p.xi_a_route2));
      rec.det_identity_gap = detail::checked(std::abs(det - predicted),
                                             rec.status, "det identity");
    }
  } catch (const std::exception& e) {
    rec.status = e.what();
  }
  return rec;
}

struct SweepOutput {
  std::vector<ResultRecord> records;
  nlohmann::json summary;
};

inline SweepOutput run_sweep(const SweepConfig& cfg, int threads = 1) {
  const std::vector<double> lambdas = cfg.lambda_grid();
  const std::size_t n_lam = lambdas.size();
  const std::size_t n_r = cfg.couplings.size();
  SweepOutput out;
  out.records.assign(n_lam * n_r, ResultRecord{});

  auto work_lambda = [&](std::size_t li) {
    const double lam = lambdas[li];
    std::vector<ResultRecord> rows(n_r);
    try {
      const LambdaContext ctx =
          make_context(cfg.model, cfg.frame, cfg.pert, lam);
      for (std::size_t ri = 0; ri < n_r; ++ri)
        rows[ri] = sweep_point(ctx, cfg.couplings[ri], cfg);
    } catch (const std::exception& e) {
      for (std::size_t ri = 0; ri < n_r; ++ri) {
        rows[ri].lambda = lam;
        rows[ri].r = cfg.couplings[ri];
        rows[ri].status = e.what();
        rows[ri].tail_bound = cfg.frame.tail_bound;
      }
    }
    for (std::size_t ri = 0; ri < n_r; ++ri)
      out.records[li * n_r + ri] = std::move(rows[ri]);
  };

  if (threads <= 1 || n_lam <= 1) {
    for (std::size_t li = 0; li < n_lam; ++li) work_lambda(li);
  } else {
    std::atomic<std::size_t> next{0};
    const std::size_t pool =
        std::min<std::size_t>(static_cast<std::size_t>(threads), n_lam);
    std::vector<std::thread> workers;
    workers.reserve(pool);
    for (std::size_t w = 0; w < pool; ++w)
      workers.emplace_back([&]() {
        for (std::size_t li = next.fetch_add(1); li < n_lam;
             li = next.fetch_add(1))
          work_lambda(li);
      });
    for (std::thread& t : workers) t.join();
  }

  // suite-level statistics, deterministic given config and seed
  std::optional<double> max_unit, max_wave, max_gap, max_det, max_xi_gap,
      max_int, max_est;
  std::size_t ok = 0;
  nlohmann::json inventory = nlohmann::json::array();
  for (const ResultRecord& rec : out.records) {
    if (rec.status == "ok") ++ok;
    detail::max_opt(max_unit, rec.unitarity_s);
    detail::max_opt(max_wave, rec.unitarity_w_plus);
    detail::max_opt(max_wave, rec.unitarity_w_minus);
    detail::max_opt(max_gap, rec.route_gap);
    detail::max_opt(max_det, rec.det_identity_gap);
    detail::max_opt(max_xi_gap, rec.xi_route_gap);
    detail::max_opt(max_int, rec.nearest_int_dist);
    detail::max_opt(max_est, rec.est_error);
    if (!rec.resonances.empty()) {
      nlohmann::json item;
      item["lambda"] = rec.lambda;
      item["r"] = rec.r;
      item["crossed"] = rec.resonances;
      inventory.push_back(item);
    }
  }
  nlohmann::json& s = out.summary;
  s["spec_version"] = "1.0";
  s["points"] = out.records.size();
  s["ok"] = ok;
  s["failed"] = out.records.size() - ok;
  auto put = [&s](const char* key, const std::optional<double>& v) {
    if (v) s[key] = *v;
  };
  put("max_unitarity_s", max_unit);
  put("max_unitarity_wave", max_wave);
  put("max_route_gap", max_gap);
  put("max_det_identity_gap", max_det);
  put("max_xi_route_gap", max_xi_gap);
  put("max_nearest_int_dist", max_int);
  put("max_est_error", max_est);
  s["resonance_inventory"] = inventory;
  s["config"] = config_json(cfg);
  return out;
}

inline const char* csv_header() {
  return "lambda,r,status,fiber_dim,unitarity_s,unitarity_w_plus,"
         "unitarity_w_minus,tol_unitarity,route_gap,tol_route_agreement,"
         "det_identity_gap,tol_det_identity,xi_a,xi_total,xi_s,"
         "xi_a_integral,xi_a_route2,xi_route_gap,tol_xi_routes,"
         "nearest_int_dist,tol_integer_distance,est_error,resonances,"
         "tail_bound";
}

inline void write_csv(const std::vector<ResultRecord>& records,
                      const Tolerances& tol, std::ostream& os) {
  os << csv_header() << "\n";
  for (const ResultRecord& rec : records) {
    std::string res;
    for (std::size_t i = 0; i < rec.resonances.size(); ++i) {
      if (i) res += ';';
      res += detail::fmt_g(rec.resonances[i]);
    }
    std::string status = rec.status;
    std::replace(status.begin(), status.end(), ',', ';');
    os << detail::fmt_g(rec.lambda) << ',' << detail::fmt_g(rec.r) << ','
       << status << ',' << rec.fiber_dim << ','
       << detail::fmt_opt(rec.unitarity_s) << ','
       << detail::fmt_opt(rec.unitarity_w_plus) << ','
       << detail::fmt_opt(rec.unitarity_w_minus) << ','
       << detail::fmt_g(tol.unitarity) << ','
       << detail::fmt_opt(rec.route_gap) << ','
       << detail::fmt_g(tol.route_agreement) << ','
       << detail::fmt_opt(rec.det_identity_gap) << ','
       << detail::fmt_g(tol.det_identity) << ','
       << detail::fmt_opt(rec.xi_a) << ',' << detail::fmt_opt(rec.xi_total)
       << ',' << detail::fmt_opt(rec.xi_s) << ','
       << detail::fmt_opt(rec.xi_a_integral) << ','
       << detail::fmt_opt(rec.xi_a_route2) << ','
       << detail::fmt_opt(rec.xi_route_gap) << ','
       << detail::fmt_g(tol.xi_routes) << ','
       << detail::fmt_opt(rec.nearest_int_dist) << ','
       << detail::fmt_g(tol.integer_distance) << ','
       << detail::fmt_opt(rec.est_error) << ',' << res << ','
       << detail::fmt_g(rec.tail_bound) << "\n";
  }
}

}  // namespace krein
