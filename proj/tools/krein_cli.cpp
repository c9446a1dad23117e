// Command line front end: sweeps, scattering tables, resonance scans, the
// verification suite, and the ordered-exponential benchmark. Outputs are
// plain CSV/JSON files, deterministic for a fixed config and seed.

#include <krein/acceptance.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace krein;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  int threads = 1;
  std::optional<std::uint64_t> seed;
  std::string profile = "default";
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required) {
  auto* c = cmd->add_option("--config", opts.config_path,
                            "JSON sweep configuration");
  if (config_required) c->required();
  cmd->add_option("--out", opts.out_dir,
                  "output directory (overrides the config)");
  cmd->add_option("--threads", opts.threads, "worker threads over energies")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", opts.seed,
                  "override the perturbation seed of a generated J");
  cmd->add_option("--tolerance-profile", opts.profile,
                  "default, or strict (every bound tightened 100x)")
      ->check(CLI::IsMember({"default", "strict"}));
}

SweepConfig prepare(const CommonOpts& opts) {
  SweepConfig cfg = load_config(opts.config_path);
  if (opts.seed) {
    if (!cfg.pert_structured)
      throw ConfigError("perturbation.dense",
                        "--seed cannot override a dense matrix");
    cfg.pert_seed = *opts.seed;
    cfg.pert = Perturbation::random_rank(cfg.frame_size, cfg.pert_rank,
                                         cfg.pert_seed);
    cfg.pert.j *= cfg.pert_norm;
  }
  if (opts.profile == "strict") cfg.tol = cfg.tol.scaled(0.01);
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  return cfg;
}

std::ofstream open_out(const SweepConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.out_dir);
  const std::filesystem::path path =
      std::filesystem::path(cfg.out_dir) / name;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

int cmd_scan(const CommonOpts& opts) {
  const SweepConfig cfg = prepare(opts);
  const SweepOutput result = run_sweep(cfg, opts.threads);
  {
    std::ofstream csv = open_out(cfg, "results.csv");
    write_csv(result.records, cfg.tol, csv);
  }
  {
    std::ofstream js = open_out(cfg, "summary.json");
    js << result.summary.dump(2) << "\n";
  }
  std::size_t failed = 0;
  for (const ResultRecord& rec : result.records)
    if (rec.status != "ok") ++failed;
  std::cout << result.records.size() << " points, " << failed
            << " flagged; results in " << cfg.out_dir << "\n";
  return 0;
}

int cmd_scattering(const CommonOpts& opts) {
  const SweepConfig cfg = prepare(opts);
  std::ofstream csv = open_out(cfg, "s_matrices.csv");
  csv << "lambda,r,route,row,col,re,im,status\n";
  for (double lam : cfg.lambda_grid()) {
    for (double r : cfg.couplings) {
      std::string status = "ok";
      std::vector<std::pair<const char*, Mat>> mats;
      try {
        const LambdaContext ctx =
            make_context(cfg.model, cfg.frame, cfg.pert, lam);
        for (ScatteringRoute route : cfg.routes) {
          switch (route) {
            case ScatteringRoute::stationary:
              mats.emplace_back("stationary", scattering_stationary(ctx, r).s);
              break;
            case ScatteringRoute::wave_product:
              mats.emplace_back("wave_product",
                                scattering_wave_product(ctx, r).s);
              break;
            default:
              mats.emplace_back("texp", scattering_texp(ctx, r).s);
              break;
          }
        }
      } catch (const std::exception& e) {
        status = e.what();
        std::replace(status.begin(), status.end(), ',', ';');
        csv << detail::fmt_g(lam) << ',' << detail::fmt_g(r) << ",,,,,,"
            << status << "\n";
        continue;
      }
      for (const auto& [name, s] : mats)
        for (Eigen::Index a = 0; a < s.rows(); ++a)
          for (Eigen::Index b = 0; b < s.cols(); ++b)
            csv << detail::fmt_g(lam) << ',' << detail::fmt_g(r) << ','
                << name << ',' << a << ',' << b << ','
                << detail::fmt_g(s(a, b).real()) << ','
                << detail::fmt_g(s(a, b).imag()) << ",ok\n";
    }
  }
  std::cout << "scattering tables in " << cfg.out_dir << "\n";
  return 0;
}

int cmd_resonances(const CommonOpts& opts) {
  const SweepConfig cfg = prepare(opts);
  std::ofstream csv = open_out(cfg, "resonances.csv");
  csv << "lambda,kind,r,sigma_min,status\n";
  const double lo = cfg.res_scan.r_min;
  const double hi = cfg.res_scan.r_max;
  for (double lam : cfg.lambda_grid()) {
    try {
      const LambdaContext ctx =
          make_context(cfg.model, cfg.frame, cfg.pert, lam);
      const ResonanceScan scan =
          resonance_scan(ctx, lo, hi, cfg.res_scan.samples);
      for (const auto& [r, sig] : scan.samples)
        csv << detail::fmt_g(lam) << ",sample," << detail::fmt_g(r) << ','
            << detail::fmt_g(sig) << ",ok\n";
      for (const ResonancePoint& p : scan.resonances)
        csv << detail::fmt_g(lam) << ",resonance," << detail::fmt_g(p.r)
            << ',' << detail::fmt_g(p.sigma_min) << ",ok\n";
    } catch (const std::exception& e) {
      std::string status = e.what();
      std::replace(status.begin(), status.end(), ',', ';');
      csv << detail::fmt_g(lam) << ",,,," << status << "\n";
    }
  }
  std::cout << "resonance scan in " << cfg.out_dir << "\n";
  return 0;
}

int cmd_verify(const CommonOpts& opts) {
  std::optional<SweepConfig> cfg;
  Tolerances tol;
  if (!opts.config_path.empty()) {
    cfg = prepare(opts);
    tol = cfg->tol;
  } else if (opts.profile == "strict") {
    tol = tol.scaled(0.01);
  }
  const AcceptanceReport rep =
      run_acceptance(tol, &std::cout, cfg ? &*cfg : nullptr);
  std::cout << (rep.all_pass ? "all criteria passed"
                             : "verification FAILED")
            << " (" << rep.seconds << " s)\n";
  return rep.all_pass ? 0 : 1;
}

int cmd_texp_bench(const CommonOpts&) {
  std::printf("trial  det_residual  semigroup_residual  unitarity\n");
  double worst_det = 0.0, worst_semi = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(1000 + static_cast<std::uint64_t>(trial));
    const Mat h1 = rng.hermitian(6);
    const Mat h2 = rng.hermitian(6);
    const Mat h3 = rng.hermitian(6);
    auto path = [&](double t) { return Mat(h1 + t * h2 + t * t * h3); };
    const double t_end = 1.1;
    const Mat whole = texp(path, 0.0, t_end, 1e-12);
    const cplx tr_int = h1.trace() * t_end +
                        h2.trace() * (t_end * t_end / 2.0) +
                        h3.trace() * (t_end * t_end * t_end / 3.0);
    const double det_res = std::abs(whole.determinant() -
                                    std::exp(cplx(0.0, -1.0) * tr_int));
    const Mat lower = texp(path, 0.0, 0.44, 1e-12);
    const Mat upper = texp(path, 0.44, t_end, 1e-12);
    const double semi = max_abs(whole - upper * lower);
    const double uni =
        max_abs(whole.adjoint() * whole - Mat::Identity(6, 6));
    std::printf("%5d  %12.3e  %18.3e  %9.3e\n", trial, det_res, semi, uni);
    worst_det = std::max(worst_det, det_res);
    worst_semi = std::max(worst_semi, semi);
  }
  std::printf("worst  %12.3e  %18.3e\n", worst_det, worst_semi);
  return (worst_det < 1e-8 && worst_semi < 1e-9) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trace-class scattering sweeps and verification"};
  app.require_subcommand(1);

  CommonOpts scan, scat, res, verify, bench;
  CLI::App* c_scan = app.add_subcommand("scan", "shift-function sweep");
  add_common(c_scan, scan, true);
  CLI::App* c_scat = app.add_subcommand("scattering", "S-matrix tables");
  add_common(c_scat, scat, true);
  CLI::App* c_res = app.add_subcommand("resonances", "coupling scans");
  add_common(c_res, res, true);
  CLI::App* c_ver = app.add_subcommand("verify", "acceptance suite");
  add_common(c_ver, verify, false);
  CLI::App* c_bench =
      app.add_subcommand("texp-bench", "ordered-exponential benchmark");
  add_common(c_bench, bench, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(c_scan)) return cmd_scan(scan);
    if (app.got_subcommand(c_scat)) return cmd_scattering(scat);
    if (app.got_subcommand(c_res)) return cmd_resonances(res);
    if (app.got_subcommand(c_ver)) return cmd_verify(verify);
    return cmd_texp_bench(bench);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
