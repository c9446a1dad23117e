#pragma once
// Sweep configuration: JSON ingestion with strict validation, default
// filling, and normalized re-emission. Loading an emitted config reproduces
// it byte for byte, and unknown keys are rejected with their field path so a
// typo never silently falls back to a default.

#include <krein/models.hpp>
#include <krein/random.hpp>
#include <krein/scattering.hpp>

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace krein {

struct ConfigError : std::runtime_error {
  std::string path;  // dotted field path, e.g. "lambda_grid.count"

  ConfigError(std::string field_path, const std::string& what)
      : std::runtime_error(field_path + ": " + what),
        path(std::move(field_path)) {}
};

// every residual the sweep emits is paired with one of these bounds
struct Tolerances {
  double unitarity = 1e-6;
  double route_agreement = 1e-4;
  double det_identity = 1e-6;
  double xi_routes = 1e-4;
  double integer_distance = 1e-3;
  double counting = 1e-2;
  double trace_formula = 1e-3;
  double texp_det = 1e-8;
  double texp_semigroup = 1e-9;
  double aronszajn = 1e-10;
  double im_sandwich = 1e-9;
  double gram = 1e-10;

  Tolerances scaled(double factor) const {
    Tolerances t = *this;
    t.unitarity *= factor;
    t.route_agreement *= factor;
    t.det_identity *= factor;
    t.xi_routes *= factor;
    t.integer_distance *= factor;
    t.counting *= factor;
    t.trace_formula *= factor;
    t.texp_det *= factor;
    t.texp_semigroup *= factor;
    t.aronszajn *= factor;
    t.im_sandwich *= factor;
    t.gram *= factor;
    return t;
  }
};

struct Discretization {
  int r_steps = 256;
  int theta_grid = 64;
  int s_steps = 16;
  double y_base = 1e-6;
};

struct ResonanceScanSpec {
  double r_min = 0.0;
  double r_max = 1.0;
  int samples = 256;
};

struct SweepConfig {
  // model
  std::string model_kind = "free_jacobi";
  OperatorModel model = FreeJacobi{};
  Eigen::Index finite_size = 0;       // finite_hermitian only
  std::uint64_t finite_seed = 0;      // finite_hermitian only
  std::vector<double> grid_nodes;     // multiplication_grid only
  std::vector<double> grid_densities; // multiplication_grid only

  // frame
  std::string frame_law = "geometric";
  Eigen::Index frame_size = 200;
  Frame frame = Frame::geometric(200);

  // perturbation
  bool pert_structured = true;
  Eigen::Index pert_rank = 2;
  std::uint64_t pert_seed = 1;
  double pert_norm = 1.0;
  Perturbation pert = Perturbation::random_rank(200, 2, 1);

  // sweep window
  double lambda_min = -1.9;
  double lambda_max = 1.9;
  int lambda_count = 21;
  std::vector<double> couplings = {1.0};
  bool coupling_end_form = false;  // emitted back as "coupling_end"

  std::vector<ScatteringRoute> routes = {ScatteringRoute::stationary,
                                         ScatteringRoute::wave_product,
                                         ScatteringRoute::texp};
  Tolerances tol;
  Discretization disc;
  ResonanceScanSpec res_scan;
  bool res_scan_given = false;
  std::string out_dir = "out";

  std::vector<double> lambda_grid() const {
    std::vector<double> g;
    g.reserve(static_cast<std::size_t>(lambda_count));
    for (int i = 0; i < lambda_count; ++i)
      g.push_back(lambda_count == 1
                      ? lambda_min
                      : lambda_min + (lambda_max - lambda_min) * i /
                                         (lambda_count - 1));
    return g;
  }
};

namespace detail {

using njson = nlohmann::json;

inline void reject_unknown_keys(const njson& obj, const std::string& path,
                                std::initializer_list<const char*> allowed) {
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (ok.find(it.key()) == ok.end())
      throw ConfigError(path.empty() ? it.key() : path + "." + it.key(),
                        "unknown key");
}

inline const njson* member(const njson& obj, const std::string& key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline double get_number(const njson& obj, const std::string& path,
                         const std::string& key, double fallback) {
  const njson* v = member(obj, key);
  if (!v) return fallback;
  if (!v->is_number())
    throw ConfigError(path + "." + key, "expected a number");
  return v->get<double>();
}

inline std::int64_t get_integer(const njson& obj, const std::string& path,
                                const std::string& key,
                                std::int64_t fallback) {
  const njson* v = member(obj, key);
  if (!v) return fallback;
  if (!v->is_number_integer())
    throw ConfigError(path + "." + key, "expected an integer");
  return v->get<std::int64_t>();
}

inline std::string get_string(const njson& obj, const std::string& path,
                              const std::string& key,
                              const std::string& fallback) {
  const njson* v = member(obj, key);
  if (!v) return fallback;
  if (!v->is_string())
    throw ConfigError(path + "." + key, "expected a string");
  return v->get<std::string>();
}

inline std::vector<double> get_number_array(const njson& v,
                                            const std::string& path) {
  if (!v.is_array() || v.empty())
    throw ConfigError(path, "expected a non-empty array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (const njson& x : v) {
    if (!x.is_number()) throw ConfigError(path, "expected numbers only");
    out.push_back(x.get<double>());
  }
  return out;
}

inline const char* route_name(ScatteringRoute r) {
  switch (r) {
    case ScatteringRoute::stationary: return "stationary";
    case ScatteringRoute::wave_product: return "wave_product";
    default: return "texp";
  }
}

inline void parse_model(const njson& obj, SweepConfig& cfg) {
  reject_unknown_keys(obj, "model",
                      {"kind", "size", "seed", "nodes", "densities"});
  cfg.model_kind = get_string(obj, "model", "kind", "free_jacobi");
  if (cfg.model_kind == "free_jacobi") {
    for (const char* k : {"size", "seed", "nodes", "densities"})
      if (member(obj, k))
        throw ConfigError(std::string("model.") + k,
                          "not a free_jacobi field");
    cfg.model = FreeJacobi{};
  } else if (cfg.model_kind == "finite_hermitian") {
    cfg.finite_size = get_integer(obj, "model", "size", 30);
    cfg.finite_seed =
        static_cast<std::uint64_t>(get_integer(obj, "model", "seed", 1));
    if (cfg.finite_size < 1)
      throw ConfigError("model.size", "must be at least 1");
    for (const char* k : {"nodes", "densities"})
      if (member(obj, k))
        throw ConfigError(std::string("model.") + k,
                          "not a finite_hermitian field");
    Rng rng(cfg.finite_seed);
    cfg.model = FiniteHermitian{rng.hermitian(cfg.finite_size)};
  } else if (cfg.model_kind == "multiplication_grid") {
    const njson* nodes = member(obj, "nodes");
    const njson* dens = member(obj, "densities");
    if (!nodes || !dens)
      throw ConfigError("model", "multiplication_grid needs nodes and densities");
    for (const char* k : {"size", "seed"})
      if (member(obj, k))
        throw ConfigError(std::string("model.") + k,
                          "not a multiplication_grid field");
    cfg.grid_nodes = get_number_array(*nodes, "model.nodes");
    cfg.grid_densities = get_number_array(*dens, "model.densities");
    if (cfg.grid_nodes.size() != cfg.grid_densities.size())
      throw ConfigError("model.densities", "must match nodes in length");
    if (cfg.grid_nodes.size() < 2)
      throw ConfigError("model.nodes", "need at least two nodes");
    MultiplicationGrid mg;
    mg.nodes = Eigen::Map<const RVec>(cfg.grid_nodes.data(),
                                      static_cast<Eigen::Index>(
                                          cfg.grid_nodes.size()));
    mg.densities = Eigen::Map<const RVec>(
        cfg.grid_densities.data(),
        static_cast<Eigen::Index>(cfg.grid_densities.size()));
    for (Eigen::Index i = 1; i < mg.nodes.size(); ++i)
      if (!(mg.nodes(i) > mg.nodes(i - 1)))
        throw ConfigError("model.nodes", "must be strictly increasing");
    for (Eigen::Index i = 0; i < mg.densities.size(); ++i)
      if (!(mg.densities(i) >= 0.0))
        throw ConfigError("model.densities", "must be non-negative");
    cfg.model = mg;
  } else {
    throw ConfigError("model.kind",
                      "unknown model kind '" + cfg.model_kind + "'");
  }
}

inline void parse_frame(const njson& obj, SweepConfig& cfg) {
  reject_unknown_keys(obj, "frame", {"law", "size"});
  cfg.frame_law = get_string(obj, "frame", "law", "geometric");
  cfg.frame_size = get_integer(obj, "frame", "size", 200);
  if (cfg.frame_size < 1) throw ConfigError("frame.size", "must be at least 1");
  if (cfg.frame_law == "geometric") {
    cfg.frame = Frame::geometric(cfg.frame_size);
  } else if (cfg.frame_law == "unit") {
    cfg.frame.weights = RVec::Ones(cfg.frame_size);
    cfg.frame.tail_bound = 0.0;
  } else {
    throw ConfigError("frame.law",
                      "unknown weight law '" + cfg.frame_law + "'");
  }
}

inline void parse_perturbation(const njson& obj, SweepConfig& cfg) {
  reject_unknown_keys(obj, "perturbation", {"rank", "seed", "norm", "dense"});
  const njson* dense = member(obj, "dense");
  if (dense) {
    for (const char* k : {"rank", "seed", "norm"})
      if (member(obj, k))
        throw ConfigError(std::string("perturbation.") + k,
                          "dense and generated forms are exclusive");
    if (!dense->is_array() || dense->empty())
      throw ConfigError("perturbation.dense", "expected a matrix");
    const Eigen::Index n = static_cast<Eigen::Index>(dense->size());
    Mat j(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
      const njson& row = (*dense)[static_cast<std::size_t>(a)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
        throw ConfigError("perturbation.dense", "matrix must be square");
      for (Eigen::Index b = 0; b < n; ++b) {
        const njson& cell = row[static_cast<std::size_t>(b)];
        if (cell.is_number()) {
          j(a, b) = cell.get<double>();
        } else if (cell.is_array() && cell.size() == 2 &&
                   cell[0].is_number() && cell[1].is_number()) {
          j(a, b) = cplx(cell[0].get<double>(), cell[1].get<double>());
        } else {
          throw ConfigError("perturbation.dense",
                            "entries are numbers or [re, im] pairs");
        }
      }
    }
    if (max_abs(j - j.adjoint()) > 1e-12 * (1.0 + max_abs(j)))
      throw ConfigError("perturbation.dense", "matrix must be Hermitian");
    cfg.pert_structured = false;
    cfg.pert.j = hermitian_part(j);
    return;
  }
  cfg.pert_structured = true;
  cfg.pert_rank = get_integer(obj, "perturbation", "rank", 2);
  cfg.pert_seed =
      static_cast<std::uint64_t>(get_integer(obj, "perturbation", "seed", 1));
  cfg.pert_norm = get_number(obj, "perturbation", "norm", 1.0);
  if (cfg.pert_rank < 1)
    throw ConfigError("perturbation.rank", "must be at least 1");
  if (!(cfg.pert_norm > 0.0))
    throw ConfigError("perturbation.norm", "must be positive");
}

inline void parse_tolerances(const njson& obj, Tolerances& tol) {
  reject_unknown_keys(
      obj, "tolerances",
      {"unitarity", "route_agreement", "det_identity", "xi_routes",
       "integer_distance", "counting", "trace_formula", "texp_det",
       "texp_semigroup", "aronszajn", "im_sandwich", "gram"});
  tol.unitarity = get_number(obj, "tolerances", "unitarity", tol.unitarity);
  tol.route_agreement =
      get_number(obj, "tolerances", "route_agreement", tol.route_agreement);
  tol.det_identity =
      get_number(obj, "tolerances", "det_identity", tol.det_identity);
  tol.xi_routes = get_number(obj, "tolerances", "xi_routes", tol.xi_routes);
  tol.integer_distance =
      get_number(obj, "tolerances", "integer_distance", tol.integer_distance);
  tol.counting = get_number(obj, "tolerances", "counting", tol.counting);
  tol.trace_formula =
      get_number(obj, "tolerances", "trace_formula", tol.trace_formula);
  tol.texp_det = get_number(obj, "tolerances", "texp_det", tol.texp_det);
  tol.texp_semigroup =
      get_number(obj, "tolerances", "texp_semigroup", tol.texp_semigroup);
  tol.aronszajn = get_number(obj, "tolerances", "aronszajn", tol.aronszajn);
  tol.im_sandwich =
      get_number(obj, "tolerances", "im_sandwich", tol.im_sandwich);
  tol.gram = get_number(obj, "tolerances", "gram", tol.gram);
  for (double v : {tol.unitarity, tol.route_agreement, tol.det_identity,
                   tol.xi_routes, tol.integer_distance, tol.counting,
                   tol.trace_formula, tol.texp_det, tol.texp_semigroup,
                   tol.aronszajn, tol.im_sandwich, tol.gram})
    if (!(v > 0.0)) throw ConfigError("tolerances", "must be positive");
}

}  // namespace detail

inline SweepConfig parse_config(const nlohmann::json& root) {
  if (!root.is_object()) throw ConfigError("", "config must be a JSON object");
  detail::reject_unknown_keys(
      root, "",
      {"model", "frame", "perturbation", "lambda_grid", "couplings",
       "coupling_end", "tolerances", "routes", "discretization",
       "resonance_scan", "output"});
  SweepConfig cfg;

  if (const auto* m = detail::member(root, "model")) {
    if (!m->is_object()) throw ConfigError("model", "expected an object");
    detail::parse_model(*m, cfg);
  }
  if (const auto* f = detail::member(root, "frame")) {
    if (!f->is_object()) throw ConfigError("frame", "expected an object");
    detail::parse_frame(*f, cfg);
  } else {
    cfg.frame = Frame::geometric(cfg.frame_size);
  }
  if (cfg.model_kind == "finite_hermitian" &&
      cfg.finite_size != cfg.frame_size)
    throw ConfigError("frame.size", "must equal model.size");
  if (cfg.model_kind == "multiplication_grid" &&
      static_cast<Eigen::Index>(cfg.grid_nodes.size()) != cfg.frame_size + 1)
    throw ConfigError("frame.size", "must equal the number of grid cells");

  if (const auto* p = detail::member(root, "perturbation")) {
    if (!p->is_object())
      throw ConfigError("perturbation", "expected an object");
    detail::parse_perturbation(*p, cfg);
  }
  if (cfg.pert_structured) {
    if (cfg.pert_rank > cfg.frame_size)
      throw ConfigError("perturbation.rank", "exceeds the frame size");
    cfg.pert = Perturbation::random_rank(cfg.frame_size, cfg.pert_rank,
                                         cfg.pert_seed);
    cfg.pert.j *= cfg.pert_norm;
  } else if (cfg.pert.j.rows() != cfg.frame_size) {
    throw ConfigError("perturbation.dense", "size must match the frame");
  }

  if (const auto* g = detail::member(root, "lambda_grid")) {
    if (!g->is_object())
      throw ConfigError("lambda_grid", "expected an object");
    detail::reject_unknown_keys(*g, "lambda_grid", {"min", "max", "count"});
    cfg.lambda_min = detail::get_number(*g, "lambda_grid", "min", -1.9);
    cfg.lambda_max = detail::get_number(*g, "lambda_grid", "max", 1.9);
    cfg.lambda_count = static_cast<int>(
        detail::get_integer(*g, "lambda_grid", "count", 21));
  }
  if (cfg.lambda_count < 1)
    throw ConfigError("lambda_grid.count", "must be at least 1");
  if (!(cfg.lambda_min <= cfg.lambda_max))
    throw ConfigError("lambda_grid.min", "must not exceed max");
  if (cfg.lambda_count == 1 && cfg.lambda_min != cfg.lambda_max)
    throw ConfigError("lambda_grid.count",
                      "a single point needs min equal to max");
  for (double lam : cfg.lambda_grid())
    if (!lambda_admissible(cfg.model, lam))
      throw ConfigError("lambda_grid",
                        "point " + std::to_string(lam) +
                            " outside the admissible window");

  const auto* cs = detail::member(root, "couplings");
  const auto* ce = detail::member(root, "coupling_end");
  if (cs && ce)
    throw ConfigError("coupling_end", "exclusive with couplings");
  if (cs) {
    cfg.couplings = detail::get_number_array(*cs, "couplings");
    cfg.coupling_end_form = false;
  } else if (ce) {
    if (!ce->is_number())
      throw ConfigError("coupling_end", "expected a number");
    cfg.couplings = {ce->get<double>()};
    cfg.coupling_end_form = true;
  }

  if (const auto* t = detail::member(root, "tolerances")) {
    if (!t->is_object())
      throw ConfigError("tolerances", "expected an object");
    detail::parse_tolerances(*t, cfg.tol);
  }

  if (const auto* r = detail::member(root, "routes")) {
    if (!r->is_array() || r->empty())
      throw ConfigError("routes", "expected a non-empty array");
    cfg.routes.clear();
    for (const auto& item : *r) {
      if (!item.is_string())
        throw ConfigError("routes", "expected route names");
      const std::string name = item.get<std::string>();
      ScatteringRoute route;
      if (name == "stationary") {
        route = ScatteringRoute::stationary;
      } else if (name == "wave_product") {
        route = ScatteringRoute::wave_product;
      } else if (name == "texp") {
        route = ScatteringRoute::texp;
      } else {
        throw ConfigError("routes", "unknown route '" + name + "'");
      }
      bool seen = false;
      for (ScatteringRoute have : cfg.routes) seen = seen || have == route;
      if (!seen) cfg.routes.push_back(route);
    }
  }

  if (const auto* d = detail::member(root, "discretization")) {
    if (!d->is_object())
      throw ConfigError("discretization", "expected an object");
    detail::reject_unknown_keys(*d, "discretization",
                                {"r_steps", "theta_grid", "s_steps", "y_base"});
    cfg.disc.r_steps = static_cast<int>(
        detail::get_integer(*d, "discretization", "r_steps", 256));
    cfg.disc.theta_grid = static_cast<int>(
        detail::get_integer(*d, "discretization", "theta_grid", 64));
    cfg.disc.s_steps = static_cast<int>(
        detail::get_integer(*d, "discretization", "s_steps", 16));
    cfg.disc.y_base =
        detail::get_number(*d, "discretization", "y_base", 1e-6);
    if (cfg.disc.r_steps < 1)
      throw ConfigError("discretization.r_steps", "must be at least 1");
    if (cfg.disc.theta_grid < 2)
      throw ConfigError("discretization.theta_grid", "must be at least 2");
    if (cfg.disc.s_steps < 1)
      throw ConfigError("discretization.s_steps", "must be at least 1");
    if (!(cfg.disc.y_base > 0.0))
      throw ConfigError("discretization.y_base", "must be positive");
  }

  if (const auto* rs = detail::member(root, "resonance_scan")) {
    if (!rs->is_object())
      throw ConfigError("resonance_scan", "expected an object");
    detail::reject_unknown_keys(*rs, "resonance_scan",
                                {"r_min", "r_max", "samples"});
    cfg.res_scan_given = true;
    cfg.res_scan.r_min =
        detail::get_number(*rs, "resonance_scan", "r_min", 0.0);
    cfg.res_scan.r_max =
        detail::get_number(*rs, "resonance_scan", "r_max", 1.0);
    cfg.res_scan.samples = static_cast<int>(
        detail::get_integer(*rs, "resonance_scan", "samples", 256));
    if (!(cfg.res_scan.r_min < cfg.res_scan.r_max))
      throw ConfigError("resonance_scan.r_min", "must be below r_max");
    if (cfg.res_scan.samples < 2)
      throw ConfigError("resonance_scan.samples", "must be at least 2");
  } else {
    double top = 0.0;
    for (double r : cfg.couplings) top = std::max(top, std::abs(r));
    cfg.res_scan.r_min = 0.0;
    cfg.res_scan.r_max = top > 0.0 ? top : 1.0;
    cfg.res_scan.samples = 256;
  }

  if (const auto* o = detail::member(root, "output")) {
    if (!o->is_object()) throw ConfigError("output", "expected an object");
    detail::reject_unknown_keys(*o, "output", {"dir"});
    cfg.out_dir = detail::get_string(*o, "output", "dir", "out");
    if (cfg.out_dir.empty())
      throw ConfigError("output.dir", "must not be empty");
  }
  return cfg;
}

inline SweepConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path, std::string("not valid JSON: ") + e.what());
  }
  return parse_config(root);
}

// normalized re-emission: defaults filled in, derived fields omitted
inline nlohmann::json config_json(const SweepConfig& cfg) {
  nlohmann::json root;
  nlohmann::json model;
  model["kind"] = cfg.model_kind;
  if (cfg.model_kind == "finite_hermitian") {
    model["size"] = cfg.finite_size;
    model["seed"] = cfg.finite_seed;
  } else if (cfg.model_kind == "multiplication_grid") {
    model["nodes"] = cfg.grid_nodes;
    model["densities"] = cfg.grid_densities;
  }
  root["model"] = model;
  root["frame"] = {{"law", cfg.frame_law}, {"size", cfg.frame_size}};
  nlohmann::json pert;
  if (cfg.pert_structured) {
    pert["rank"] = cfg.pert_rank;
    pert["seed"] = cfg.pert_seed;
    pert["norm"] = cfg.pert_norm;
  } else {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index a = 0; a < cfg.pert.j.rows(); ++a) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index b = 0; b < cfg.pert.j.cols(); ++b)
        row.push_back({cfg.pert.j(a, b).real(), cfg.pert.j(a, b).imag()});
      rows.push_back(row);
    }
    pert["dense"] = rows;
  }
  root["perturbation"] = pert;
  root["lambda_grid"] = {{"min", cfg.lambda_min},
                         {"max", cfg.lambda_max},
                         {"count", cfg.lambda_count}};
  if (cfg.coupling_end_form) {
    root["coupling_end"] = cfg.couplings.front();
  } else {
    root["couplings"] = cfg.couplings;
  }
  root["tolerances"] = {{"unitarity", cfg.tol.unitarity},
                        {"route_agreement", cfg.tol.route_agreement},
                        {"det_identity", cfg.tol.det_identity},
                        {"xi_routes", cfg.tol.xi_routes},
                        {"integer_distance", cfg.tol.integer_distance},
                        {"counting", cfg.tol.counting},
                        {"trace_formula", cfg.tol.trace_formula},
                        {"texp_det", cfg.tol.texp_det},
                        {"texp_semigroup", cfg.tol.texp_semigroup},
                        {"aronszajn", cfg.tol.aronszajn},
                        {"im_sandwich", cfg.tol.im_sandwich},
                        {"gram", cfg.tol.gram}};
  nlohmann::json routes = nlohmann::json::array();
  for (ScatteringRoute r : cfg.routes) routes.push_back(detail::route_name(r));
  root["routes"] = routes;
  root["discretization"] = {{"r_steps", cfg.disc.r_steps},
                            {"theta_grid", cfg.disc.theta_grid},
                            {"s_steps", cfg.disc.s_steps},
                            {"y_base", cfg.disc.y_base}};
  if (cfg.res_scan_given)
    root["resonance_scan"] = {{"r_min", cfg.res_scan.r_min},
                              {"r_max", cfg.res_scan.r_max},
                              {"samples", cfg.res_scan.samples}};
  root["output"] = {{"dir", cfg.out_dir}};
  return root;
}

}  // namespace krein
