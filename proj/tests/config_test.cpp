#include <krein/config.hpp>
#include <krein/sweep.hpp>

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

using namespace krein;
using nlohmann::json;

namespace {

json minimal_config() {
  return json{{"model", {{"kind", "free_jacobi"}}},
              {"frame", {{"law", "geometric"}, {"size", 40}}},
              {"perturbation", {{"rank", 1}, {"seed", 3}}},
              {"lambda_grid", {{"min", -1.0}, {"max", 1.0}, {"count", 11}}},
              {"couplings", {0.5, 1.0}}};
}

std::string expect_config_error(const json& cfg) {
  try {
    parse_config(cfg);
  } catch (const ConfigError& e) {
    return e.path;
  }
  ADD_FAILURE() << "config accepted: " << cfg.dump();
  return "";
}

}  // namespace

TEST(Config, MinimalFillsDefaults) {
  const SweepConfig cfg = parse_config(minimal_config());
  EXPECT_EQ(cfg.model_kind, "free_jacobi");
  EXPECT_EQ(cfg.frame_size, 40);
  EXPECT_EQ(cfg.pert.j.rows(), 40);
  EXPECT_EQ(cfg.lambda_grid().size(), 11u);
  EXPECT_EQ(cfg.couplings.size(), 2u);
  EXPECT_EQ(cfg.routes.size(), 3u);
  EXPECT_DOUBLE_EQ(cfg.tol.unitarity, 1e-6);
  EXPECT_EQ(cfg.disc.r_steps, 256);
  EXPECT_EQ(cfg.disc.theta_grid, 64);
  EXPECT_EQ(cfg.out_dir, "out");
  // scan window defaults to the coupling span
  EXPECT_DOUBLE_EQ(cfg.res_scan.r_max, 1.0);
}

TEST(Config, UnknownKeysRejectedWithPath) {
  json bad = minimal_config();
  bad["typo_key"] = 1;
  EXPECT_EQ(expect_config_error(bad), "typo_key");

  bad = minimal_config();
  bad["frame"]["sizee"] = 10;
  EXPECT_EQ(expect_config_error(bad), "frame.sizee");

  bad = minimal_config();
  bad["tolerances"] = {{"unitarityy", 1e-6}};
  EXPECT_EQ(expect_config_error(bad), "tolerances.unitarityy");

  bad = minimal_config();
  bad["discretization"] = {{"r_steps", 8}, {"grid", 2}};
  EXPECT_EQ(expect_config_error(bad), "discretization.grid");
}

TEST(Config, LambdaWindowMustBeAdmissible) {
  json bad = minimal_config();
  bad["lambda_grid"] = {{"min", -3.0}, {"max", 3.0}, {"count", 5}};
  EXPECT_EQ(expect_config_error(bad), "lambda_grid");

  // the window can touch the interior but not the band edge guard
  json ok = minimal_config();
  ok["lambda_grid"] = {{"min", -1.94}, {"max", 1.94}, {"count", 3}};
  EXPECT_NO_THROW(parse_config(ok));

  json grid = minimal_config();
  grid["model"] = {{"kind", "multiplication_grid"},
                   {"nodes", {-1.0, 0.0, 1.0}},
                   {"densities", {1.0, 0.5, 1.0}}};
  grid["frame"] = {{"law", "unit"}, {"size", 2}};
  grid["lambda_grid"] = {{"min", 0.0}, {"max", 0.0}, {"count", 1}};
  EXPECT_EQ(expect_config_error(grid), "lambda_grid");
}

TEST(Config, ValidationCatchesShapeErrors) {
  json bad = minimal_config();
  bad["lambda_grid"]["count"] = 0;
  EXPECT_EQ(expect_config_error(bad), "lambda_grid.count");

  bad = minimal_config();
  bad["couplings"] = json::array();
  EXPECT_EQ(expect_config_error(bad), "couplings");

  bad = minimal_config();
  bad["coupling_end"] = 1.0;  // both forms at once
  EXPECT_EQ(expect_config_error(bad), "coupling_end");

  bad = minimal_config();
  bad["tolerances"] = {{"unitarity", 0.0}};
  EXPECT_EQ(expect_config_error(bad), "tolerances");

  bad = minimal_config();
  bad["routes"] = {"stationary", "shortcut"};
  EXPECT_EQ(expect_config_error(bad), "routes");

  bad = minimal_config();
  bad["model"] = {{"kind", "finite_hermitian"}, {"size", 12}, {"seed", 4}};
  EXPECT_EQ(expect_config_error(bad), "frame.size");

  bad = minimal_config();
  bad["perturbation"] = {{"rank", 60}, {"seed", 1}};
  EXPECT_EQ(expect_config_error(bad), "perturbation.rank");
}

TEST(Config, DensePerturbationRoundTrip) {
  json cfg_json = minimal_config();
  cfg_json["frame"]["size"] = 2;
  cfg_json["perturbation"] = {
      {"dense", {{1.0, {0.0, 0.5}}, {{0.0, -0.5}, 2.0}}}};
  const SweepConfig cfg = parse_config(cfg_json);
  EXPECT_FALSE(cfg.pert_structured);
  EXPECT_EQ(cfg.pert.j(0, 1), cplx(0.0, 0.5));
  const SweepConfig again = parse_config(config_json(cfg));
  EXPECT_EQ(config_json(cfg), config_json(again));

  json not_herm = cfg_json;
  not_herm["perturbation"] = {{"dense", {{1.0, 2.0}, {3.0, 4.0}}}};
  EXPECT_EQ(expect_config_error(not_herm), "perturbation.dense");
}

TEST(Config, EmitReloadIsIdempotent) {
  json src = minimal_config();
  src["coupling_end"] = nullptr;  // exercise the error first
  src.erase("coupling_end");
  src["tolerances"] = {{"route_agreement", 5e-5}};
  src["resonance_scan"] = {{"r_min", 0.0}, {"r_max", 2.0}, {"samples", 64}};
  const SweepConfig first = parse_config(src);
  const json emitted = config_json(first);
  const SweepConfig second = parse_config(emitted);
  EXPECT_EQ(emitted, config_json(second));
  EXPECT_DOUBLE_EQ(second.tol.route_agreement, 5e-5);
  EXPECT_DOUBLE_EQ(second.tol.unitarity, 1e-6);
  EXPECT_TRUE(second.res_scan_given);
}

TEST(Config, CouplingEndFormKept) {
  json src = minimal_config();
  src.erase("couplings");
  src["coupling_end"] = 0.75;
  const SweepConfig cfg = parse_config(src);
  ASSERT_EQ(cfg.couplings.size(), 1u);
  EXPECT_DOUBLE_EQ(cfg.couplings[0], 0.75);
  const json emitted = config_json(cfg);
  EXPECT_TRUE(emitted.contains("coupling_end"));
  EXPECT_FALSE(emitted.contains("couplings"));
}

TEST(Config, LoadFromFileAndParseErrors) {
  const char* path = "config_test_tmp.json";
  {
    std::ofstream out(path);
    out << minimal_config().dump(2);
  }
  const SweepConfig cfg = load_config(path);
  EXPECT_EQ(cfg.frame_size, 40);
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  EXPECT_THROW(load_config(path), ConfigError);
  std::remove(path);
  EXPECT_THROW(load_config("does_not_exist.json"), ConfigError);
}

TEST(Config, StrictProfileScalesEveryBound) {
  const Tolerances base;
  const Tolerances strict = base.scaled(0.01);
  EXPECT_DOUBLE_EQ(strict.unitarity, 1e-8);
  EXPECT_DOUBLE_EQ(strict.route_agreement, 1e-6);
  EXPECT_DOUBLE_EQ(strict.trace_formula, 1e-5);
  EXPECT_DOUBLE_EQ(strict.gram, 1e-12);
}

TEST(Sweep, SinglePointAtZeroCouplingIsClean) {
  json src = minimal_config();
  src["frame"]["size"] = 24;
  src["lambda_grid"] = {{"min", 0.3}, {"max", 0.3}, {"count", 1}};
  src["couplings"] = {0.0};
  const SweepConfig cfg = parse_config(src);
  const SweepOutput out = run_sweep(cfg);
  ASSERT_EQ(out.records.size(), 1u);
  const ResultRecord& rec = out.records[0];
  EXPECT_EQ(rec.status, "ok");
  EXPECT_EQ(rec.fiber_dim, 2);
  EXPECT_LT(*rec.unitarity_s, 1e-12);
  EXPECT_LT(*rec.route_gap, 1e-10);
  EXPECT_NEAR(*rec.xi_a, 0.0, 1e-12);
  EXPECT_NEAR(*rec.xi_total, 0.0, 1e-12);
  EXPECT_NEAR(*rec.xi_a_integral, 0.0, 1e-12);
  EXPECT_EQ(out.summary["ok"], 1u);
  EXPECT_EQ(out.summary["spec_version"], "1.0");
}

TEST(Sweep, DeterministicCsvAndThreadMergeOrder) {
  json src = minimal_config();
  src["frame"]["size"] = 30;
  src["lambda_grid"] = {{"min", -0.8}, {"max", 0.8}, {"count", 3}};
  src["couplings"] = {0.4, 0.9};
  src["routes"] = {"stationary", "texp"};
  const SweepConfig cfg = parse_config(src);

  const SweepOutput seq = run_sweep(cfg, 1);
  const SweepOutput par = run_sweep(cfg, 3);
  std::ostringstream a, b;
  write_csv(seq.records, cfg.tol, a);
  write_csv(par.records, cfg.tol, b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(seq.summary, par.summary);

  // rerun from the same config is byte-identical
  const SweepOutput again = run_sweep(cfg, 1);
  std::ostringstream c;
  write_csv(again.records, cfg.tol, c);
  EXPECT_EQ(a.str(), c.str());

  // rows arrive in lambda-major, coupling-minor order
  ASSERT_EQ(seq.records.size(), 6u);
  EXPECT_LT(seq.records[0].lambda, seq.records[2].lambda);
  EXPECT_LT(seq.records[0].r, seq.records[1].r);
  EXPECT_DOUBLE_EQ(seq.records[0].lambda, seq.records[1].lambda);
}

TEST(Sweep, PointFailureIsRecordedNotThrown) {
  json src = minimal_config();
  src["model"] = {{"kind", "finite_hermitian"}, {"size", 6}, {"seed", 21}};
  src["frame"] = {{"law", "unit"}, {"size", 6}};
  src["perturbation"] = {{"rank", 1}, {"seed", 22}};
  src["lambda_grid"] = {{"min", 100.0}, {"max", 100.0}, {"count", 1}};
  src["couplings"] = {0.5};
  const SweepConfig cfg = parse_config(src);
  SweepOutput out = run_sweep(cfg);
  ASSERT_EQ(out.records.size(), 1u);
  // far off the spectrum the boundary limit exists and everything is finite;
  // the point reports clean zeros rather than aborting
  EXPECT_EQ(out.records[0].status, "ok");
  EXPECT_EQ(out.records[0].fiber_dim, 0);

  // now place lambda ON an eigenvalue: the ladder cannot certify, the row
  // carries the reason and the sweep still returns
  Rng rng(21);
  FiniteHermitian fh{rng.hermitian(6)};
  const RVec evals = hermitian_eig(fh.h).values;
  json on_eig = src;
  on_eig["lambda_grid"] = {{"min", evals(2)}, {"max", evals(2)}, {"count", 1}};
  const SweepConfig cfg2 = parse_config(on_eig);
  out = run_sweep(cfg2);
  ASSERT_EQ(out.records.size(), 1u);
  EXPECT_NE(out.records[0].status, "ok");
  EXPECT_FALSE(out.records[0].xi_total.has_value());
  EXPECT_EQ(out.summary["failed"], 1u);
}

TEST(Sweep, CsvHeaderPairsResidualsWithBounds) {
  const std::string header = csv_header();
  EXPECT_NE(header.find("unitarity_s"), std::string::npos);
  EXPECT_NE(header.find("tol_unitarity"), std::string::npos);
  EXPECT_NE(header.find("route_gap"), std::string::npos);
  EXPECT_NE(header.find("tol_route_agreement"), std::string::npos);
  EXPECT_NE(header.find("xi_route_gap"), std::string::npos);
  EXPECT_NE(header.find("tol_xi_routes"), std::string::npos);
  EXPECT_NE(header.find("nearest_int_dist"), std::string::npos);
  EXPECT_NE(header.find("tol_integer_distance"), std::string::npos);

  // no empty header cells and no stray commas
  std::stringstream ss(header);
  std::string cell;
  int cells = 0;
  while (std::getline(ss, cell, ',')) {
    EXPECT_FALSE(cell.empty());
    ++cells;
  }
  EXPECT_EQ(cells, 24);
}

TEST(Sweep, ZeroPerturbationIsTrivial) {
  const int n = 16;
  json zero = json::array();
  for (int a = 0; a < n; ++a) zero.push_back(std::vector<double>(n, 0.0));
  json src = minimal_config();
  src["frame"]["size"] = n;
  src["perturbation"] = {{"dense", zero}};
  src["lambda_grid"] = {{"min", -0.9}, {"max", 0.9}, {"count", 3}};
  const SweepConfig cfg = parse_config(src);
  EXPECT_EQ(cfg.pert.j.norm(), 0.0);
  const SweepOutput out = run_sweep(cfg);
  ASSERT_EQ(out.records.size(), 6u);
  for (const ResultRecord& rec : out.records) {
    EXPECT_EQ(rec.status, "ok");
    EXPECT_LT(*rec.unitarity_s, 1e-12);
    EXPECT_LT(*rec.route_gap, 1e-10);
    EXPECT_NEAR(*rec.xi_a, 0.0, 1e-12);
    EXPECT_NEAR(*rec.xi_total, 0.0, 1e-12);
    EXPECT_NEAR(*rec.xi_a_integral, 0.0, 1e-12);
    EXPECT_NEAR(*rec.nearest_int_dist, 0.0, 1e-12);
  }
  EXPECT_EQ(out.summary["ok"], 6u);
  EXPECT_EQ(out.summary["failed"], 0u);
}
