#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace safecbf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// ||A w + b|| <= c^T w + d. With zero rows in A this is the half-space
/// c^T w + d >= 0.
struct SocConstraint {
  MatrixXd a;
  VectorXd b;
  VectorXd c;
  double d = 0.0;

  double margin(const VectorXd& w) const;
};

/// minimize cost^T w subject to the listed cones and optional box bounds
/// (use +-infinity for absent sides).
struct SocpProblem {
  VectorXd cost;
  std::vector<SocConstraint> cones;
  std::optional<VectorXd> lower;
  std::optional<VectorXd> upper;

  int dim() const { return static_cast<int>(cost.size()); }
  /// Throws DimensionError / std::invalid_argument on malformed input.
  void validate() const;
  /// Smallest constraint margin at w (bounds included).
  double min_margin(const VectorXd& w) const;
};

enum class SolveStatus { optimal, infeasible, unbounded, max_iter };
std::string_view to_string(SolveStatus s);

struct SocpSolution {
  VectorXd w;
  SolveStatus status = SolveStatus::max_iter;
  int iterations = 0;
  double primal_residual = 0.0;  // ||G w + s - h|| / max(1, ||h||)
  double dual_residual = 0.0;    // stationarity, ||G^T z + c|| / max(1, ||c||)
  double gap = 0.0;              // s^T z
  double objective = 0.0;
  VectorXd dual;                 // z (multipliers in the internal row order)
};

struct SolverOptions {
  double tol = 1e-8;
  int max_iter = 100;
  /// Optional interior point for the primal start.
  std::optional<VectorXd> warm_start;
};

/// Homogeneous self-dual interior point method with Nesterov-Todd scaling and
/// a Mehrotra predictor-corrector. Deterministic.
SocpSolution solve(const SocpProblem& p, const SolverOptions& opt = {});

}  // namespace safecbf
