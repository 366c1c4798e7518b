#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "safecbf/learner.hpp"
#include "safecbf/scenario.hpp"

namespace safecbf {

struct TraceRow {
  double t = 0.0;
  VectorXd x;
  VectorXd u;
  double b = 0.0;
  double lambda = 0.0;
  FeasibilityCase kind = FeasibilityCase::hyperbolic;
  std::size_t n = 0;
  Trigger trigger = Trigger::none;
  std::string status;
  double slack = 0.0;
  bool bound_ok = true;
  // Not serialized: H-matrix check values at (x, u) for filter-produced inputs.
  bool h_checked = false;
  double h_quad = 0.0;    // [1 u] H [1 u]^T
  double h_linear = 0.0;  // lg_hat u + lf_hat + gamma_b
  FilterMode mode = FilterMode::socp;
};

struct SimTrace {
  std::string plant;
  std::string variant;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<TraceRow> rows;
  std::string termination = "completed";  // completed | infeasible | safety_budget_exceeded | non_finite | filter_failure
  std::string message;
  std::vector<TriggerEvent> events;
  Dataset final_data;
  double epsilon = 0.0;
  double runtime = 0.0;  // seconds
  int input_bound_violations = 0;

  bool completed() const { return termination == "completed"; }
  double min_b() const;
  int count(Trigger k) const;
};

/// One closed-loop episode. Deterministic given (scenario, variant, seed).
SimTrace run_episode(const Scenario& sc, const std::string& variant, std::uint64_t seed);

std::string trace_header(int n, int m);
std::string trace_csv(const SimTrace& tr);
nlohmann::json metrics_json(const SimTrace& tr);
void write_episode(const SimTrace& tr, const std::string& dir);

/// Episode-level parallelism capped by SAFE_CBF_LAB_THREADS (default: cores).
int thread_count();
std::vector<SimTrace> run_many(const Scenario& sc, const std::vector<std::string>& variants,
                               const std::vector<std::uint64_t>& seeds);

struct CompareRow {
  std::string variant;
  std::uint64_t seed = 0;
  double min_b = 0.0;
  bool violated = false;
  int n_event = 0;
  int n_time = 0;
  std::string termination;
};
std::vector<CompareRow> compare_rows(const std::vector<SimTrace>& traces);
std::string compare_table(const std::vector<CompareRow>& rows);

/// Prior dataset for alg1_prior, rebuilt with the scenario kernel.
Dataset load_prior(const Scenario& sc);
/// K measurements along u_safe directions at states sampled around x0.
Dataset generate_warmup(const Scenario& sc, std::uint64_t seed);

struct LambdaMap {
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> values;  // per label, row-major over (y, x)

  int negative_count(std::size_t label) const;
  /// Every cell negative under `a` is negative under `b`.
  bool contains(std::size_t b, std::size_t a) const;
};

LambdaMap lambda_map(const Scenario& sc, const std::vector<std::pair<std::string, const Dataset*>>& data);
std::string lambda_map_csv(const LambdaMap& lm, const Scenario& sc);

/// First n points of d (datasets are append-only, so this is the snapshot at
/// the time the n-th point was added).
Dataset prefix(const Dataset& d, std::size_t n);

}  // namespace safecbf
