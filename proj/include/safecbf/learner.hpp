#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "safecbf/feasibility.hpp"
#include "safecbf/gp_affine.hpp"
#include "safecbf/safety_filter.hpp"
#include "safecbf/scenario.hpp"

namespace safecbf {

/// Alpha escalation ran out of retries without restoring lambda < 0.
struct SafetyBudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Trigger { none, time, event };
std::string_view to_string(Trigger t);

struct TriggerEvent {
  Trigger kind = Trigger::none;
  double t = 0.0;
  int step = 0;
  double lambda_before = 0.0;
  double lambda_after = 0.0;
  int retries = 0;
};

struct LambdaInfo {
  double lambda = 0.0;
  VectorXd direction;
  ConstraintData cd;
};

/// build_constraint_data -> tradeoff_matrix -> lambda_dagger.
LambdaInfo get_lambda_dagger(const VectorXd& x, const Dataset& d, const Plant& nominal, const FilterConfig& cfg);

struct LearnerState {
  Dataset db;
  std::optional<Dataset> dv;
  int step = 0;
  std::vector<TriggerEvent> events;
  std::size_t measurements = 0;
};

/// Everything the loop decided at one control step.
struct StepOutcome {
  VectorXd u;
  FilterMode mode = FilterMode::socp;
  Trigger trigger = Trigger::none;
  double lambda = 0.0;
  FeasibilityCase kind = FeasibilityCase::hyperbolic;
  std::string status;
  double slack = 0.0;
  bool bound_ok = true;
  double beta = 0.0;
  // Chance-constraint data and input used for the control (before any append).
  ConstraintData cd;
};

struct StepContext {
  const Scenario& sc;
  double epsilon;
  bool event_trigger = true;  // false for the time-only ablation
  std::mt19937_64& rng;
};

/// One pass of the learning loop at (x, t): choose u, then append data on a
/// time or event trigger. Throws SafetyBudgetExceeded; returns infeasible in
/// `kind` when a SOCP step is not pre-screened feasible.
StepOutcome learner_step(LearnerState& st, const VectorXd& x, double t, const StepContext& ctx);

/// Appends one Delta_B (and Delta_V) measurement at (x, u).
void record_measurement(LearnerState& st, const Scenario& sc, const VectorXd& x, const VectorXd& u,
                        std::mt19937_64& rng);

/// Default event threshold from the initial lambda.
double default_epsilon(double lambda0);

}  // namespace safecbf
