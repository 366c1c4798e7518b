#pragma once

#include <optional>
#include <string_view>

#include <Eigen/Dense>

#include "safecbf/gp_affine.hpp"

namespace safecbf {

/// Data of the chance constraint
///   beta * || Sg u + sf || <= lg_hat u + lf_hat + gamma_b
/// at one state, where [sf Sg] is the column partition of Sigma_B^{1/2}.
struct ConstraintData {
  double lf_hat = 0.0;
  Eigen::RowVectorXd lg_hat;
  VectorXd sqrt_f;  // m+1
  MatrixXd sqrt_g;  // (m+1) x m
  MatrixXd cov;     // Sigma_B, (m+1) x (m+1)
  double gamma_b = 0.0;
  double beta = 2.0;

  int input_dim() const { return static_cast<int>(lg_hat.size()); }
  /// lf_hat + gamma(B(x)).
  double drift() const { return lf_hat + gamma_b; }
  MatrixXd sigma_g() const { return cov.bottomRightCorner(input_dim(), input_dim()); }
  /// psi = [lf_hat + gamma_b, lg_hat].
  Eigen::RowVectorXd psi() const;

  /// Constraint slack at u: rhs - lhs. Nonnegative means satisfied.
  double margin(const VectorXd& u) const;

  /// From a bundle that already carries the nominal Lie derivatives.
  static ConstraintData from_bundle(const PredictionBundle& b, double gamma_b, double beta);
  /// From an explicit Sigma_B; the square root is computed here.
  static ConstraintData from_covariance(double lf_hat, const Eigen::RowVectorXd& lg_hat, const MatrixXd& cov,
                                        double gamma_b, double beta);

  void validate() const;
};

enum class FeasibilityCase { hyperbolic, elliptic, parabolic, infeasible };
std::string_view to_string(FeasibilityCase c);

constexpr double kTolEig = 1e-9;

struct AlphaPolicy {
  double margin = 1.5;  // multiple of the smallest admissible alpha
  double floor = 0.0;   // lower bound on alpha
};

struct FeasibilityReport {
  double lambda = 0.0;  // lambda_dagger
  VectorXd direction;   // e_dagger, unit norm, lg_hat . e >= 0
  FeasibilityCase geometry = FeasibilityCase::hyperbolic;  // sign class of lambda
  bool feasible = false;
  std::optional<VectorXd> witness;
  bool necessary_ok = false;
  double necessary_value = 0.0;  // psi Sigma_B^{-1} psi^T, compared to beta^2
  double case_value = 0.0;       // elliptic: the alpha-free bound expression; parabolic: p
  bool ill_conditioned = false;  // Sigma_B or F solve needed regularization
  bool near_boundary_disagreement = false;

  /// geometry when feasible, otherwise infeasible.
  FeasibilityCase kind() const { return feasible ? geometry : FeasibilityCase::infeasible; }
};

struct EigenPair {
  double value = 0.0;
  VectorXd vector;
};

/// F = beta^2 Sigma_LgB - lg_hat^T lg_hat.
MatrixXd tradeoff_matrix(const ConstraintData& cd);

/// Minimum eigenvalue and a unit eigenvector of a symmetric matrix.
EigenPair lambda_dagger(const MatrixXd& f);

/// psi Sigma_B^{-1} psi^T >= beta^2.
bool necessary_condition(const ConstraintData& cd, double* value = nullptr, bool* ill_conditioned = nullptr);

struct HMatrix {
  MatrixXd h;  // [[H11, H1u], [H1u^T, Huu]]

  double h11() const { return h(0, 0); }
  Eigen::RowVectorXd h1u() const { return h.block(0, 1, 1, h.cols() - 1); }
  MatrixXd huu() const { return h.bottomRightCorner(h.rows() - 1, h.cols() - 1); }
  /// [1 u^T] H [1; u]; nonpositive iff the squared cone inequality holds.
  double quadratic(const VectorXd& u) const;
};

HMatrix h_matrix(const ConstraintData& cd);

/// lg_hat u + lf_hat + gamma_b (right-hand side of the cone constraint).
double linear_part(const ConstraintData& cd, const VectorXd& u);

/// Smallest alpha >= 0 such that u = alpha e_dagger satisfies both the squared
/// cone inequality and the sign condition. Requires lambda_dagger < -kTolEig.
double min_alpha(const ConstraintData& cd);

/// Backup input alpha sgn(lg_hat e) e with alpha = max(margin * min_alpha, floor).
/// Throws std::domain_error when lambda_dagger >= -kTolEig or lg_hat e = 0.
VectorXd u_safe(const ConstraintData& cd, const AlphaPolicy& policy = {});

/// Hyperbolic / elliptic / parabolic classification with a witness input
/// whenever the constraint is satisfiable.
FeasibilityReport classify(const ConstraintData& cd, const AlphaPolicy& policy = {});

}  // namespace safecbf
