#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "safecbf/cone_solver.hpp"
#include "safecbf/feasibility.hpp"
#include "safecbf/gp_affine.hpp"
#include "safecbf/plants.hpp"

namespace safecbf {

struct ClfOptions {
  bool enabled = false;
  double rate = 1.0;    // c3 in  Vdot + c3 V <= d
  double penalty = 10.0;  // rho, weight of the relaxation d
};

struct FilterConfig {
  BetaSchedule beta;
  double gamma_c = 1.0;  // gamma(s) = gamma_c s
  // Subtracted from gamma_c B: the input is held for a control period, so the
  // continuous-time condition is tightened slightly.
  double sample_margin = 0.0;
  ClfOptions clf;
  SolverOptions solver;

  void validate() const;
};

enum class FilterMode { socp, qp_nominal, qp_oracle, u_safe };
std::string_view to_string(FilterMode m);

struct FilterResult {
  VectorXd u;
  FilterMode mode = FilterMode::socp;
  double lambda = 0.0;
  FeasibilityCase geometry = FeasibilityCase::hyperbolic;
  double slack = 0.0;        // constraint margin at u
  double relaxation = 0.0;   // CLF relaxation d (0 when disabled)
  SolveStatus status = SolveStatus::optimal;
};

/// Raised when a pre-screened problem does not solve; carries a dump.
struct FilterFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Chance-constraint data at x from the GP on Delta_B plus nominal Lie derivatives.
ConstraintData build_constraint_data(const VectorXd& x, const Dataset& d, const Plant& nominal,
                                     const FilterConfig& cfg);

/// Upper-confidence CLF data: beta ||Sg u + sf|| <= d - lf_hat - lg_hat u - c3 V.
struct ClfData {
  double lf_hat = 0.0;
  Eigen::RowVectorXd lg_hat;
  VectorXd sqrt_f;
  MatrixXd sqrt_g;
  double v = 0.0;
  double beta = 0.0;
};

/// Relaxed probabilistic CLF constraint from a separate Delta_V dataset.
ClfData clf_soft_constraint(const VectorXd& x, const Dataset& dv, const Plant& nominal, const FilterConfig& cfg);

/// Certainty-equivalent CLF data (no uncertainty) from a known model.
ClfData clf_from_model(const VectorXd& x, const Plant& model);

/// Minimally invasive filter over the chance cone constraint. The caller
/// must have classified cd as feasible; `witness` (if any) seeds the solver.
FilterResult gp_cbf_socp(const VectorXd& u_ref, const ConstraintData& cd, const FilterConfig& cfg,
                         const std::optional<ClfData>& clf = std::nullopt,
                         const std::optional<VectorXd>& witness = std::nullopt);

/// Closed-form CBF-QP projection onto {a^T u + b >= 0} with a = L_gB^T,
/// b = L_fB + gamma_c B - margin.
VectorXd cbf_qp(const VectorXd& x, const VectorXd& u_ref, const Plant& model, double gamma_c, double margin = 0.0);

/// CBF-QP with the relaxed CLF constraint (known model, no GP), solved as a
/// small cone program.
FilterResult cbf_clf_qp(const VectorXd& x, const VectorXd& u_ref, const Plant& model, const FilterConfig& cfg);

}  // namespace safecbf
