#include "fishervi/io.hpp"

#include <json.hpp>

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fishervi {

using nlohmann::json;

const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::Tatonnement: return "tatonnement";
    case Algorithm::TradingPost: return "trading_post";
    case Algorithm::Eg: return "eg";
    case Algorithm::ClosedForm: return "closed_form";
    case Algorithm::BruteForce: return "brute_force";
    case Algorithm::All: return "all";
  }
  return "?";
}

Algorithm algorithm_from_name(const std::string& name) {
  if (name == "tatonnement") return Algorithm::Tatonnement;
  if (name == "trading_post") return Algorithm::TradingPost;
  if (name == "eg") return Algorithm::Eg;
  if (name == "closed_form") return Algorithm::ClosedForm;
  if (name == "brute_force") return Algorithm::BruteForce;
  if (name == "all") return Algorithm::All;
  throw SchemaError("algorithm: unknown value '" + name + "'");
}

namespace {

Family family_from_name(const std::string& name, const std::string& path) {
  if (name == "tullock") return Family::Tullock;
  if (name == "cobb_douglas") return Family::CobbDouglas;
  if (name == "linear") return Family::Linear;
  throw SchemaError(path + ": unknown family '" + name + "'");
}

json parse_json(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw SchemaError(std::string(what) + ": not valid JSON");
  return j;
}

const json& require(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(path + "." + key + ": missing");
  return *it;
}

Scalar as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path + ": expected a number");
  return j.get<Scalar>();
}

Index as_index(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw SchemaError(path + ": expected an integer");
  return j.get<Index>();
}

Vec as_vector(const json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path + ": expected an array");
  Vec v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<Index>(i)] = as_number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Index n = 0; n < m.rows(); ++n) rows.push_back(vec_to_json(m.row(n).transpose()));
  return rows;
}

void check_known_keys(const json& j, std::initializer_list<const char*> known,
                      const std::string& path) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) ok = true;
    if (!ok) throw SchemaError(path + "." + it.key() + ": unknown field");
  }
}

}  // namespace

std::string serialize_instance(const MarketInstance& market) {
  json j;
  j["n_buyers"] = market.n_buyers;
  j["n_goods"] = market.n_goods;
  j["budgets"] = vec_to_json(market.budgets);
  json utilities = json::array();
  for (const auto& u : market.utilities) {
    json m;
    m["family"] = family_name(family_of(u));
    if (const auto* t = std::get_if<Tullock>(&u)) {
      m["a"] = vec_to_json(t->a);
      m["rho"] = vec_to_json(t->rho);
    } else if (const auto* cd = std::get_if<CobbDouglas>(&u)) {
      m["a"] = vec_to_json(cd->a);
    } else {
      m["v"] = vec_to_json(std::get<Linear>(u).v);
    }
    utilities.push_back(std::move(m));
  }
  j["utilities"] = std::move(utilities);
  return j.dump(2);
}

MarketInstance load_instance(const std::string& text) {
  const json j = parse_json(text, "instance");
  check_known_keys(j, {"n_buyers", "n_goods", "budgets", "utilities"}, "instance");

  MarketInstance market;
  market.n_buyers = as_index(require(j, "n_buyers", "instance"), "instance.n_buyers");
  market.n_goods = as_index(require(j, "n_goods", "instance"), "instance.n_goods");
  market.budgets = as_vector(require(j, "budgets", "instance"), "instance.budgets");

  const json& utilities = require(j, "utilities", "instance");
  if (!utilities.is_array()) throw SchemaError("instance.utilities: expected an array");
  for (std::size_t i = 0; i < utilities.size(); ++i) {
    const std::string path = "instance.utilities[" + std::to_string(i) + "]";
    const json& m = utilities[i];
    const json& fam = require(m, "family", path);
    if (!fam.is_string()) throw SchemaError(path + ".family: expected a string");
    switch (family_from_name(fam.get<std::string>(), path + ".family")) {
      case Family::Tullock: {
        check_known_keys(m, {"family", "a", "rho"}, path);
        Tullock t;
        t.a = as_vector(require(m, "a", path), path + ".a");
        t.rho = as_vector(require(m, "rho", path), path + ".rho");
        market.utilities.emplace_back(std::move(t));
        break;
      }
      case Family::CobbDouglas: {
        check_known_keys(m, {"family", "a"}, path);
        market.utilities.emplace_back(
            CobbDouglas{as_vector(require(m, "a", path), path + ".a")});
        break;
      }
      case Family::Linear: {
        check_known_keys(m, {"family", "v"}, path);
        market.utilities.emplace_back(
            Linear{as_vector(require(m, "v", path), path + ".v")});
        break;
      }
    }
  }
  market.validate();
  return market;
}

MarketInstance resolve_instance(const InstanceSource& source) {
  if (source.path) {
    std::ifstream in(*source.path);
    if (!in) throw SchemaError("instance.path: cannot open '" + *source.path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load_instance(text);
  }
  return random_instance(source.seed, source.buyers, source.goods, source.family,
                         source.random_budgets);
}

ExperimentConfig parse_config(const std::string& text) {
  const json j = parse_json(text, "config");
  check_known_keys(j,
                   {"instance", "algorithm", "solver", "output_dir", "emit", "grid",
                    "certificate_samples", "jobs"},
                   "config");

  ExperimentConfig cfg;

  const json& inst = require(j, "instance", "config");
  check_known_keys(inst, {"path", "seed", "buyers", "goods", "family", "random_budgets"},
                   "config.instance");
  if (inst.contains("path")) {
    if (!inst["path"].is_string())
      throw SchemaError("config.instance.path: expected a string");
    cfg.instance.path = inst["path"].get<std::string>();
  } else {
    cfg.instance.seed = static_cast<std::uint64_t>(
        as_index(require(inst, "seed", "config.instance"), "config.instance.seed"));
    cfg.instance.buyers =
        as_index(require(inst, "buyers", "config.instance"), "config.instance.buyers");
    cfg.instance.goods =
        as_index(require(inst, "goods", "config.instance"), "config.instance.goods");
    if (inst.contains("family")) {
      if (!inst["family"].is_string())
        throw SchemaError("config.instance.family: expected a string");
      cfg.instance.family =
          family_from_name(inst["family"].get<std::string>(), "config.instance.family");
    }
    if (inst.contains("random_budgets")) {
      if (!inst["random_budgets"].is_boolean())
        throw SchemaError("config.instance.random_budgets: expected a boolean");
      cfg.instance.random_budgets = inst["random_budgets"].get<bool>();
    }
  }

  const json& algo = require(j, "algorithm", "config");
  if (!algo.is_string()) throw SchemaError("config.algorithm: expected a string");
  cfg.algorithm = algorithm_from_name(algo.get<std::string>());

  if (j.contains("solver")) {
    const json& s = j["solver"];
    check_known_keys(s,
                     {"max_iters", "epsilon", "alpha_exponent", "beta_exponent",
                      "bid_floor", "record_every", "epsilon_accept"},
                     "config.solver");
    if (s.contains("max_iters"))
      cfg.solver.max_iters = as_index(s["max_iters"], "config.solver.max_iters");
    if (s.contains("epsilon"))
      cfg.solver.epsilon = as_number(s["epsilon"], "config.solver.epsilon");
    if (s.contains("alpha_exponent"))
      cfg.solver.alpha_exponent =
          as_number(s["alpha_exponent"], "config.solver.alpha_exponent");
    if (s.contains("beta_exponent"))
      cfg.solver.beta_exponent =
          as_number(s["beta_exponent"], "config.solver.beta_exponent");
    if (s.contains("bid_floor"))
      cfg.solver.bid_floor = as_number(s["bid_floor"], "config.solver.bid_floor");
    if (s.contains("record_every"))
      cfg.solver.record_every = as_index(s["record_every"], "config.solver.record_every");
    if (s.contains("epsilon_accept"))
      cfg.solver.epsilon_accept =
          as_number(s["epsilon_accept"], "config.solver.epsilon_accept");
  }

  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string())
      throw SchemaError("config.output_dir: expected a string");
    cfg.output_dir = j["output_dir"].get<std::string>();
  }
  if (j.contains("emit")) {
    if (!j["emit"].is_array()) throw SchemaError("config.emit: expected an array");
    cfg.emit.clear();
    for (const auto& e : j["emit"]) {
      if (!e.is_string()) throw SchemaError("config.emit: expected strings");
      const std::string v = e.get<std::string>();
      if (v != "price_trace" && v != "error_trace" && v != "kkt_trace" &&
          v != "certificate" && v != "summary")
        throw SchemaError("config.emit: unknown artifact '" + v + "'");
      cfg.emit.insert(v);
    }
  }
  if (j.contains("grid")) cfg.grid = as_index(j["grid"], "config.grid");
  if (j.contains("certificate_samples"))
    cfg.certificate_samples =
        as_index(j["certificate_samples"], "config.certificate_samples");
  if (j.contains("jobs")) cfg.jobs = as_index(j["jobs"], "config.jobs");

  // Cross-field validation.
  if (cfg.algorithm == Algorithm::Tatonnement || cfg.algorithm == Algorithm::All)
    cfg.solver.validate_tatonnement();
  else
    cfg.solver.validate();
  if (cfg.grid < 50 && cfg.algorithm == Algorithm::BruteForce)
    throw ValidationError("brute_force needs grid >= 50");
  if (cfg.jobs < 1) throw ValidationError("jobs must be >= 1");
  if (cfg.certificate_samples < 1)
    throw ValidationError("certificate_samples must be >= 1");
  if (!cfg.instance.path) {
    if (cfg.instance.buyers < 1 || cfg.instance.goods < 1)
      throw ValidationError("instance needs buyers >= 1 and goods >= 1");
  }
  return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
  json j;
  json inst;
  if (cfg.instance.path) {
    inst["path"] = *cfg.instance.path;
  } else {
    inst["seed"] = cfg.instance.seed;
    inst["buyers"] = cfg.instance.buyers;
    inst["goods"] = cfg.instance.goods;
    inst["family"] = family_name(cfg.instance.family);
    inst["random_budgets"] = cfg.instance.random_budgets;
  }
  j["instance"] = std::move(inst);
  j["algorithm"] = algorithm_name(cfg.algorithm);
  j["solver"] = {{"max_iters", cfg.solver.max_iters},
                 {"epsilon", cfg.solver.epsilon},
                 {"alpha_exponent", cfg.solver.alpha_exponent},
                 {"beta_exponent", cfg.solver.beta_exponent},
                 {"bid_floor", cfg.solver.bid_floor},
                 {"record_every", cfg.solver.record_every},
                 {"epsilon_accept", cfg.solver.epsilon_accept}};
  j["output_dir"] = cfg.output_dir;
  j["emit"] = cfg.emit;
  j["grid"] = cfg.grid;
  j["certificate_samples"] = cfg.certificate_samples;
  j["jobs"] = cfg.jobs;
  return j.dump(2);
}

namespace {

std::string format_full(Scalar v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

void write_price_trace(const std::filesystem::path& dir, const SolverTrace& trace,
                       Index n_goods) {
  std::string csv = "iter";
  for (Index k = 0; k < n_goods; ++k) csv += ",p_" + std::to_string(k + 1);
  csv += "\n";
  for (const auto& [t, p] : trace.price_history) {
    csv += std::to_string(t);
    for (Index k = 0; k < n_goods; ++k) csv += "," + format_full(p[k]);
    csv += "\n";
  }
  write_file(dir / "price_trace.csv", csv);
}

void write_scalar_trace(const std::filesystem::path& path, const char* column,
                        const std::vector<std::pair<Index, Scalar>>& series) {
  std::string csv = std::string("iter,") + column + "\n";
  for (const auto& [t, v] : series) csv += std::to_string(t) + "," + format_full(v) + "\n";
  write_file(path, csv);
}

void emit_traces(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                 const SolverTrace& trace, Index n_goods) {
  if (cfg.emit.count("price_trace")) write_price_trace(dir, trace, n_goods);
  if (cfg.emit.count("error_trace"))
    write_scalar_trace(dir / "error_trace.csv", "change_norm", trace.change_norms);
  if (cfg.emit.count("kkt_trace"))
    write_scalar_trace(dir / "kkt_trace.csv", "kkt_total", trace.kkt_history);
}

MethodOutcome run_learning_method(const ExperimentConfig& cfg, const MarketInstance& market,
                                  Algorithm algo, const std::filesystem::path& dir) {
  MethodOutcome outcome;
  outcome.name = algorithm_name(algo);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const SolveResult result = algo == Algorithm::Tatonnement
                                   ? solve_tatonnement(market, cfg.solver)
                                   : solve_trading_post(market, cfg.solver);
    outcome.converged = result.trace.converged;
    outcome.iterations = result.trace.iterations;
    outcome.allocation = result.allocation;
    outcome.prices = result.prices;
    emit_traces(cfg, dir, result.trace, market.n_goods);
  } catch (const MaxItersExceeded& e) {
    outcome.max_iters_exceeded = true;
    outcome.iterations = e.trace.iterations;
    outcome.allocation = e.allocation;
    outcome.prices = e.prices;
    emit_traces(cfg, dir, e.trace, market.n_goods);  // diagnosability
  }
  outcome.wall_seconds =
      std::chrono::duration<Scalar>(std::chrono::steady_clock::now() - t0).count();
  outcome.final_kkt = kkt_residual(market, outcome.allocation, outcome.prices).total;
  return outcome;
}

MethodOutcome run_oracle_method(const ExperimentConfig& cfg, const MarketInstance& market,
                                Algorithm algo) {
  MethodOutcome outcome;
  outcome.name = algorithm_name(algo);
  const auto t0 = std::chrono::steady_clock::now();
  OracleResult result;
  switch (algo) {
    case Algorithm::Eg: result = solve_eg(market, cfg.solver); break;
    case Algorithm::ClosedForm: result = closed_form_cobb_douglas(market); break;
    default: result = brute_force_ve(market, cfg.grid); break;
  }
  outcome.converged = true;
  outcome.allocation = result.allocation;
  outcome.prices = result.prices;
  outcome.final_kkt = result.certified_kkt;
  outcome.wall_seconds =
      std::chrono::duration<Scalar>(std::chrono::steady_clock::now() - t0).count();
  return outcome;
}

json outcome_to_json(const MethodOutcome& o) {
  json j;
  j["method"] = o.name;
  j["converged"] = o.converged;
  j["max_iters_exceeded"] = o.max_iters_exceeded;
  j["iterations"] = o.iterations;
  j["wall_time_seconds"] = o.wall_seconds;
  j["final_kkt"] = o.final_kkt;
  j["prices"] = vec_to_json(o.prices);
  j["allocation"] = mat_to_json(o.allocation);
  return j;
}

void validate_algorithm_against_market(Algorithm algo, const MarketInstance& market) {
  if ((algo == Algorithm::Eg || algo == Algorithm::ClosedForm) && !market.all_cch())
    throw ValidationError(std::string(algorithm_name(algo)) +
                          " requires a CCH instance (cobb_douglas or linear buyers)");
  if (algo == Algorithm::ClosedForm && !market.all_family(Family::CobbDouglas))
    throw ValidationError("closed_form requires an all-cobb_douglas instance");
  if (algo == Algorithm::BruteForce && market.n_buyers * market.n_goods > 4)
    throw ValidationError("brute_force requires n_buyers * n_goods <= 4");
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg) {
  const MarketInstance market = resolve_instance(cfg.instance);
  if (cfg.algorithm != Algorithm::All) validate_algorithm_against_market(cfg.algorithm, market);

  const std::filesystem::path root(cfg.output_dir);
  std::filesystem::create_directories(root);

  std::vector<Algorithm> methods;
  if (cfg.algorithm == Algorithm::All) {
    methods = {Algorithm::Tatonnement, Algorithm::TradingPost};
    if (market.all_cch()) methods.push_back(Algorithm::Eg);
    if (market.all_family(Family::CobbDouglas)) methods.push_back(Algorithm::ClosedForm);
    if (market.n_buyers * market.n_goods <= 4 && cfg.grid >= 50)
      methods.push_back(Algorithm::BruteForce);
  } else {
    methods = {cfg.algorithm};
  }

  RunSummary summary;
  summary.all_converged = true;
  for (Algorithm algo : methods) {
    std::filesystem::path dir = root;
    if (cfg.algorithm == Algorithm::All) {
      dir = root / algorithm_name(algo);
      std::filesystem::create_directories(dir);
    }
    MethodOutcome outcome =
        (algo == Algorithm::Tatonnement || algo == Algorithm::TradingPost)
            ? run_learning_method(cfg, market, algo, dir)
            : run_oracle_method(cfg, market, algo);
    summary.all_converged = summary.all_converged && outcome.converged;
    summary.any_max_iters = summary.any_max_iters || outcome.max_iters_exceeded;
    summary.outcomes.push_back(std::move(outcome));
  }

  for (std::size_t i = 0; i < summary.outcomes.size(); ++i)
    for (std::size_t j = i + 1; j < summary.outcomes.size(); ++j) {
      const auto& a = summary.outcomes[i];
      const auto& b = summary.outcomes[j];
      summary.agreement[a.name + "_vs_" + b.name] =
          (a.allocation - b.allocation).cwiseAbs().maxCoeff();
    }

  if (cfg.emit.count("certificate")) {
    summary.certificate =
        sample_certificate(market, cfg.certificate_samples, cfg.instance.seed);
    std::string csv = "samples,lambda_max,verdict\n";
    csv += std::to_string(summary.certificate->sample_points) + "," +
           format_full(summary.certificate->lambda_max) + "," +
           verdict_name(summary.certificate->verdict) + "\n";
    write_file(root / "certificate.csv", csv);
  }

  if (cfg.emit.count("summary")) {
    json j;
    j["instance"] = json::parse(serialize_instance(market));
    j["algorithm"] = algorithm_name(cfg.algorithm);
    json outs = json::array();
    for (const auto& o : summary.outcomes) outs.push_back(outcome_to_json(o));
    j["outcomes"] = std::move(outs);
    json agreement = json::object();
    for (const auto& [key, value] : summary.agreement) agreement[key] = value;
    j["agreement"] = std::move(agreement);
    if (summary.certificate) {
      j["certificate"] = {{"samples", summary.certificate->sample_points},
                          {"lambda_max", summary.certificate->lambda_max},
                          {"verdict", verdict_name(summary.certificate->verdict)}};
    }
    j["all_converged"] = summary.all_converged;
    write_file(root / "summary.json", j.dump(2));
  }
  return summary;
}

}  // namespace fishervi
