#include "fishervi/io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace {

using namespace fishervi;

struct CommonFlags {
  std::string config_path;
  std::string instance_path;
  std::uint64_t seed = 0;
  Index buyers = 5;
  Index goods = 3;
  std::string family = "tullock";
  bool random_budgets = false;
  std::string algo = "tatonnement";
  Scalar alpha_exp = 0.6;
  Scalar beta_exp = 0.9;
  Scalar eps = 1e-6;
  Index max_iters = 200000;
  std::string out = "out";
  Index jobs = 1;
  Index grid = 100;
  Index samples = 50;
};

void add_instance_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--seed", f.seed, "instance generator seed");
  cmd->add_option("--buyers", f.buyers, "number of buyers");
  cmd->add_option("--goods", f.goods, "number of goods");
  cmd->add_option("--family", f.family, "tullock | cobb_douglas | linear");
  cmd->add_flag("--random-budgets", f.random_budgets, "draw budgets instead of uniform 1/N");
  cmd->add_option("--instance", f.instance_path, "load the market from a JSON document");
}

ExperimentConfig build_config(const CommonFlags& f, const CLI::App* cmd) {
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw SchemaError("cannot open config '" + f.config_path + "'");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    ExperimentConfig cfg = parse_config(text);
    // Explicit flags override the document.
    if (cmd->count("--out")) cfg.output_dir = f.out;
    if (cmd->count("--jobs")) cfg.jobs = f.jobs;
    return cfg;
  }
  ExperimentConfig cfg;
  if (!f.instance_path.empty()) {
    cfg.instance.path = f.instance_path;
  } else {
    cfg.instance.seed = f.seed;
    cfg.instance.buyers = f.buyers;
    cfg.instance.goods = f.goods;
    cfg.instance.random_budgets = f.random_budgets;
    if (f.family == "tullock")
      cfg.instance.family = Family::Tullock;
    else if (f.family == "cobb_douglas")
      cfg.instance.family = Family::CobbDouglas;
    else if (f.family == "linear")
      cfg.instance.family = Family::Linear;
    else
      throw SchemaError("--family: unknown family '" + f.family + "'");
  }
  cfg.algorithm = algorithm_from_name(f.algo);
  cfg.solver.alpha_exponent = f.alpha_exp;
  cfg.solver.beta_exponent = f.beta_exp;
  cfg.solver.epsilon = f.eps;
  cfg.solver.max_iters = f.max_iters;
  cfg.output_dir = f.out;
  cfg.jobs = f.jobs;
  cfg.grid = f.grid;
  cfg.certificate_samples = f.samples;
  if (cfg.algorithm == Algorithm::Tatonnement || cfg.algorithm == Algorithm::All)
    cfg.solver.validate_tatonnement();
  else
    cfg.solver.validate();
  return cfg;
}

void print_outcomes(const RunSummary& summary) {
  for (const auto& o : summary.outcomes) {
    std::printf("%-13s converged=%s iters=%lld kkt=%.3e wall=%.2fs\n", o.name.c_str(),
                o.converged ? "yes" : "no", static_cast<long long>(o.iterations),
                o.final_kkt, o.wall_seconds);
  }
  for (const auto& [pair, gap] : summary.agreement)
    std::printf("agreement %-34s inf-norm %.3e\n", pair.c_str(), gap);
  if (summary.certificate)
    std::printf("certificate samples=%lld lambda_max=%.6e verdict=%s\n",
                static_cast<long long>(summary.certificate->sample_points),
                summary.certificate->lambda_max, verdict_name(summary.certificate->verdict));
}

int run_command(const CommonFlags& flags, const CLI::App* cmd) {
  ExperimentConfig cfg = build_config(flags, cmd);

  if (cfg.jobs <= 1) {
    const RunSummary summary = run_experiment(cfg);
    print_outcomes(summary);
    return summary.any_max_iters ? 2 : 0;
  }

  // Fan independent seeds out across workers, one subdirectory each.
  std::vector<int> codes(static_cast<std::size_t>(cfg.jobs), 0);
  std::vector<std::thread> workers;
  for (Index w = 0; w < cfg.jobs; ++w) {
    workers.emplace_back([&cfg, &codes, w]() {
      ExperimentConfig local = cfg;
      local.jobs = 1;
      local.instance.seed = cfg.instance.seed + static_cast<std::uint64_t>(w);
      local.output_dir = cfg.output_dir + "/seed_" + std::to_string(local.instance.seed);
      try {
        const RunSummary summary = run_experiment(local);
        codes[static_cast<std::size_t>(w)] = summary.any_max_iters ? 2 : 0;
      } catch (...) {
        codes[static_cast<std::size_t>(w)] = 1;
      }
    });
  }
  for (auto& worker : workers) worker.join();
  int rc = 0;
  for (int c : codes) rc = std::max(rc, c);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Competitive equilibria of generalized Fisher markets"};
  app.require_subcommand(1);

  CommonFlags flags;

  CLI::App* gen = app.add_subcommand("gen", "generate a market instance document");
  add_instance_flags(gen, flags);
  gen->add_option("--out", flags.out, "output file (stdout when omitted)");

  CLI::App* run = app.add_subcommand("run", "run an experiment and emit traces");
  add_instance_flags(run, flags);
  run->add_option("--config", flags.config_path, "JSON experiment config");
  run->add_option("--algo", flags.algo,
                  "tatonnement | trading_post | eg | closed_form | brute_force | all");
  run->add_option("--alpha-exp", flags.alpha_exp, "buyer step exponent");
  run->add_option("--beta-exp", flags.beta_exp, "auctioneer step exponent");
  run->add_option("--eps", flags.eps, "stopping tolerance");
  run->add_option("--max-iters", flags.max_iters, "iteration budget");
  run->add_option("--grid", flags.grid, "brute-force grid resolution");
  run->add_option("--out", flags.out, "output directory");
  run->add_option("--jobs", flags.jobs, "fan out this many consecutive seeds");

  CLI::App* certify = app.add_subcommand("certify", "sample the monotonicity certificate");
  add_instance_flags(certify, flags);
  certify->add_option("--samples", flags.samples, "number of interior sample points");
  certify->add_option("--out", flags.out, "output directory");

  CLI::App* compare = app.add_subcommand("compare",
                                         "cross-algorithm / oracle agreement report");
  add_instance_flags(compare, flags);
  compare->add_option("--eps", flags.eps, "stopping tolerance");
  compare->add_option("--max-iters", flags.max_iters, "iteration budget");
  compare->add_option("--grid", flags.grid, "brute-force grid resolution");
  compare->add_option("--out", flags.out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const MarketInstance market =
          flags.instance_path.empty()
              ? random_instance(flags.seed, flags.buyers, flags.goods,
                                flags.family == "cobb_douglas" ? Family::CobbDouglas
                                : flags.family == "linear"     ? Family::Linear
                                                               : Family::Tullock,
                                flags.random_budgets)
              : resolve_instance(InstanceSource{flags.instance_path});
      const std::string text = serialize_instance(market);
      if (gen->count("--out")) {
        const std::filesystem::path path(flags.out);
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot write '" + flags.out + "'");
        out << text << "\n";
      } else {
        std::cout << text << "\n";
      }
      return 0;
    }
    if (run->parsed()) return run_command(flags, run);
    if (certify->parsed()) {
      ExperimentConfig cfg = build_config(flags, certify);
      cfg.certificate_samples = flags.samples;
      const MarketInstance market = resolve_instance(cfg.instance);
      const MonotonicityCertificate cert =
          sample_certificate(market, cfg.certificate_samples, cfg.instance.seed);
      std::printf("samples=%lld lambda_max=%.9e verdict=%s\n",
                  static_cast<long long>(cert.sample_points), cert.lambda_max,
                  verdict_name(cert.verdict));
      if (certify->count("--out")) {
        std::filesystem::create_directories(cfg.output_dir);
        std::ofstream out(std::filesystem::path(cfg.output_dir) / "certificate.csv",
                          std::ios::binary);
        if (!out) throw Error("cannot write certificate under '" + cfg.output_dir + "'");
        char row[96];
        std::snprintf(row, sizeof(row), "%lld,%.17g,%s",
                      static_cast<long long>(cert.sample_points), cert.lambda_max,
                      verdict_name(cert.verdict));
        out << "samples,lambda_max,verdict\n" << row << "\n";
      }
      return cert.verdict == MonotonicityVerdict::StrictlyMonotoneAtPoint ? 0 : 2;
    }
    if (compare->parsed()) {
      ExperimentConfig cfg = build_config(flags, compare);
      cfg.algorithm = Algorithm::All;
      const RunSummary summary = run_experiment(cfg);
      print_outcomes(summary);
      return summary.any_max_iters ? 2 : 0;
    }
  } catch (const SchemaError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const InvariantViolation& e) {
    std::fprintf(stderr, "invalid instance: %s\n", e.what());
    return 1;
  } catch (const MaxItersExceeded& e) {
    std::fprintf(stderr, "solver did not converge: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
