#pragma once

#include "fishervi/oracles.hpp"
#include "fishervi/stability.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>

namespace fishervi {

enum class Algorithm { Tatonnement, TradingPost, Eg, ClosedForm, BruteForce, All };

const char* algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);  // SchemaError on unknown

/// Where the experiment's market comes from: either the seeded generator
/// or an instance document on disk.
struct InstanceSource {
  std::optional<std::string> path;
  std::uint64_t seed = 0;
  Index buyers = 5;
  Index goods = 3;
  Family family = Family::Tullock;
  bool random_budgets = false;

  bool operator==(const InstanceSource&) const = default;
};

struct ExperimentConfig {
  InstanceSource instance;
  Algorithm algorithm = Algorithm::Tatonnement;
  SolverConfig solver;
  std::string output_dir = "out";
  std::set<std::string> emit = {"price_trace", "error_trace", "kkt_trace", "certificate",
                                "summary"};
  Index grid = 100;                // brute_force resolution
  Index certificate_samples = 50;
  Index jobs = 1;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses and fully validates a JSON config document, filling documented
/// defaults (alpha exponent 0.6, beta exponent 0.9, ...). Structural
/// problems raise SchemaError with the offending field path; inconsistent
/// settings raise ValidationError.
ExperimentConfig parse_config(const std::string& text);
std::string serialize_config(const ExperimentConfig& cfg);

/// Lossless JSON round-trip of a market instance at full precision.
/// load_instance validates every type invariant (InvariantViolation).
std::string serialize_instance(const MarketInstance& market);
MarketInstance load_instance(const std::string& text);

/// Generates or loads the market named by the source and validates it.
MarketInstance resolve_instance(const InstanceSource& source);

/// One algorithm's outcome inside a run.
struct MethodOutcome {
  std::string name;
  bool converged = false;
  bool max_iters_exceeded = false;
  Index iterations = 0;
  Scalar wall_seconds = 0;
  Scalar final_kkt = 0;
  Mat allocation;
  Vec prices;
};

struct RunSummary {
  std::vector<MethodOutcome> outcomes;
  std::map<std::string, Scalar> agreement;  // pairwise inf-norm allocation gaps
  std::optional<MonotonicityCertificate> certificate;
  bool all_converged = false;
  bool any_max_iters = false;
};

/// Runs the configured algorithm(s) and emits the requested artifacts under
/// output_dir: price/error/KKT traces as CSV, the stability certificate, and
/// a summary document. Outputs are deterministic for a fixed seed; solver
/// failures still write their traces before being reported.
RunSummary run_experiment(const ExperimentConfig& cfg);

}  // namespace fishervi
