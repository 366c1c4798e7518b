#include "safecbf/feasibility.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace safecbf {

std::string_view to_string(FeasibilityCase c) {
  switch (c) {
    case FeasibilityCase::hyperbolic: return "hyperbolic";
    case FeasibilityCase::elliptic: return "elliptic";
    case FeasibilityCase::parabolic: return "parabolic";
    case FeasibilityCase::infeasible: return "infeasible";
  }
  return "unknown";
}

Eigen::RowVectorXd ConstraintData::psi() const {
  Eigen::RowVectorXd p(input_dim() + 1);
  p(0) = drift();
  p.tail(input_dim()) = lg_hat;
  return p;
}

double ConstraintData::margin(const VectorXd& u) const {
  return linear_part(*this, u) - beta * (sqrt_g * u + sqrt_f).norm();
}

ConstraintData ConstraintData::from_bundle(const PredictionBundle& b, double gamma_b, double beta) {
  ConstraintData cd;
  cd.lf_hat = b.lf_hat;
  cd.lg_hat = b.lg_hat;
  cd.sqrt_f = b.sqrt_f();
  cd.sqrt_g = b.sqrt_g();
  cd.cov = b.cov;
  cd.gamma_b = gamma_b;
  cd.beta = beta;
  cd.validate();
  return cd;
}

ConstraintData ConstraintData::from_covariance(double lf_hat, const Eigen::RowVectorXd& lg_hat, const MatrixXd& cov,
                                               double gamma_b, double beta) {
  ConstraintData cd;
  cd.lf_hat = lf_hat;
  cd.lg_hat = lg_hat;
  cd.cov = 0.5 * (cov + cov.transpose());
  const MatrixXd root = sqrt_psd(cd.cov);
  cd.sqrt_f = root.col(0);
  cd.sqrt_g = root.rightCols(lg_hat.size());
  cd.gamma_b = gamma_b;
  cd.beta = beta;
  cd.validate();
  return cd;
}

void ConstraintData::validate() const {
  const auto m = lg_hat.size();
  if (m < 1) throw DimensionError("constraint data: empty input dimension");
  if (sqrt_f.size() != m + 1 || sqrt_g.rows() != m + 1 || sqrt_g.cols() != m || cov.rows() != m + 1 ||
      cov.cols() != m + 1) {
    throw DimensionError("constraint data: block dimensions inconsistent");
  }
  if (!(beta > 0.0)) throw std::invalid_argument("constraint data: beta must be > 0");
}

double linear_part(const ConstraintData& cd, const VectorXd& u) { return cd.lg_hat.dot(u) + cd.drift(); }

MatrixXd tradeoff_matrix(const ConstraintData& cd) {
  MatrixXd f = cd.beta * cd.beta * cd.sigma_g() - cd.lg_hat.transpose() * cd.lg_hat;
  return 0.5 * (f + f.transpose());
}

EigenPair lambda_dagger(const MatrixXd& f) {
  if (f.rows() != f.cols() || f.rows() == 0) throw DimensionError("lambda_dagger: matrix not square");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(f);
  return {es.eigenvalues()(0), es.eigenvectors().col(0).normalized()};
}

namespace {

// Flips e so that lg_hat e >= 0; ties broken by the first nonzero component.
VectorXd orient(const ConstraintData& cd, VectorXd e) {
  const double s = cd.lg_hat.dot(e);
  if (s < 0.0) return -e;
  if (s == 0.0) {
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      if (e(i) != 0.0) return e(i) < 0.0 ? VectorXd(-e) : e;
    }
  }
  return e;
}

// Smallest alpha >= 0 with lambda a^2 + 2 b a + c <= 0 for all larger a (lambda < 0).
double quadratic_threshold(double lambda, double b, double c) {
  const double disc = b * b - lambda * c;
  if (disc < 0.0) return 0.0;
  const double sq = std::sqrt(disc);
  const double inv = 1.0 / -lambda;
  double hi;
  if (b >= 0.0) {
    hi = (b + sq) * inv;
  } else {
    const double lo = (b - sq) * inv;
    hi = (lo == 0.0) ? 0.0 : (c / lambda) / lo;
  }
  return std::max(0.0, hi);
}

}  // namespace

bool necessary_condition(const ConstraintData& cd, double* value, bool* ill_conditioned) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cd.cov);
  const auto& ev = es.eigenvalues();
  const bool ill = ev(0) <= 0.0 || ev(ev.size() - 1) / ev(0) > 1e12;
  if (ill_conditioned) *ill_conditioned = ill;
  const VectorXd p = cd.psi().transpose();
  VectorXd w = es.eigenvectors().transpose() * p;
  const double floor = std::max(ev(ev.size() - 1) * 1e-16, std::numeric_limits<double>::min());
  double v = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) v += w(i) * w(i) / std::max(ev(i), floor);
  if (value) *value = v;
  return v >= cd.beta * cd.beta;
}

double HMatrix::quadratic(const VectorXd& u) const {
  const VectorXd y = augment(u);
  return y.dot(h * y);
}

HMatrix h_matrix(const ConstraintData& cd) {
  const auto psi = cd.psi();
  MatrixXd h = cd.beta * cd.beta * cd.cov - psi.transpose() * psi;
  h = 0.5 * (h + h.transpose());
  // Keep H_uu bitwise equal to the tradeoff matrix.
  const auto m = cd.input_dim();
  h.bottomRightCorner(m, m) = tradeoff_matrix(cd);
  return {h};
}

double min_alpha(const ConstraintData& cd) {
  const auto eig = lambda_dagger(tradeoff_matrix(cd));
  if (!(eig.value < -kTolEig)) throw std::domain_error("min_alpha: requires lambda_dagger < 0");
  const VectorXd e = orient(cd, eig.vector);
  const HMatrix hm = h_matrix(cd);
  const double b = hm.h1u().dot(e);
  const double lam = e.dot(hm.huu() * e);
  const double alpha_cone = quadratic_threshold(lam, b, hm.h11());
  const double slope = cd.lg_hat.dot(e);
  double alpha_sign = 0.0;
  if (slope > 0.0) {
    alpha_sign = std::max(0.0, -cd.drift() / slope);
  } else if (cd.drift() < 0.0) {
    alpha_sign = std::numeric_limits<double>::infinity();
  }
  return std::max({alpha_cone, alpha_sign, 0.0});
}

VectorXd u_safe(const ConstraintData& cd, const AlphaPolicy& policy) {
  const auto eig = lambda_dagger(tradeoff_matrix(cd));
  if (!(eig.value < -kTolEig)) {
    std::ostringstream os;
    os << "u_safe: lambda_dagger = " << eig.value << " is not negative";
    throw std::domain_error(os.str());
  }
  const VectorXd e = orient(cd, eig.vector);
  if (!(cd.lg_hat.dot(e) > 0.0)) throw std::domain_error("u_safe: lg_hat e_dagger vanishes");
  const double alpha = std::max(policy.margin * min_alpha(cd), policy.floor);
  if (!std::isfinite(alpha)) throw std::domain_error("u_safe: no finite alpha");
  return alpha * e;
}

FeasibilityReport classify(const ConstraintData& cd, const AlphaPolicy& policy) {
  cd.validate();
  FeasibilityReport r;
  const MatrixXd f = tradeoff_matrix(cd);
  const auto eig = lambda_dagger(f);
  r.lambda = eig.value;
  r.direction = orient(cd, eig.vector);
  bool cov_ill = false;
  r.necessary_ok = necessary_condition(cd, &r.necessary_value, &cov_ill);
  r.ill_conditioned = cov_ill;

  const auto m = cd.input_dim();
  const double a = cd.drift();
  // h = beta^2 Sg^T sf - lg_hat^T a  (Sg^T sf is the off-diagonal block of Sigma_B).
  const VectorXd cross = cd.cov.block(1, 0, m, 1);
  const VectorXd h = cd.beta * cd.beta * cross - cd.lg_hat.transpose() * a;

  if (r.lambda < -kTolEig) {
    r.geometry = FeasibilityCase::hyperbolic;
    r.feasible = true;
    r.witness = u_safe(cd, policy);
    return r;
  }

  if (r.lambda > kTolEig) {
    r.geometry = FeasibilityCase::elliptic;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(f);
    const auto& ev = es.eigenvalues();
    VectorXd inv_ev = ev.cwiseInverse();
    if (ev(m - 1) / ev(0) > 1e12) {
      r.ill_conditioned = true;
      inv_ev = (ev.array() + 1e-12).inverse().matrix();
    }
    const VectorXd u1 = -(es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose() * h);
    r.case_value = a + cd.lg_hat.dot(u1);
    r.feasible = r.necessary_ok && r.case_value >= 0.0;
    // The two conditions come from different algebra; report when only one
    // of them fails by a hair.
    const bool nec_close = std::abs(r.necessary_value - cd.beta * cd.beta) <= 1e-8 * std::max(1.0, cd.beta * cd.beta);
    const bool eq_close = std::abs(r.case_value) <= 1e-8 * std::max(1.0, std::abs(a));
    r.near_boundary_disagreement = (r.necessary_ok != (r.case_value >= 0.0)) && (nec_close || eq_close);
    if (r.feasible) r.witness = u1;
    return r;
  }

  r.geometry = FeasibilityCase::parabolic;
  const MatrixXd sg = cd.sigma_g();
  const VectorXd u0 = -sg.ldlt().solve(cross);
  r.case_value = a + cd.lg_hat.dot(u0);
  r.feasible = r.necessary_ok && r.case_value > 0.0;
  if (r.feasible) {
    const HMatrix hm = h_matrix(cd);
    const double slope = cd.lg_hat.dot(r.direction);
    const double c0 = hm.quadratic(u0);
    double alpha = (slope > 0.0) ? std::max(0.0, c0 / (2.0 * r.case_value * slope)) : 0.0;
    alpha = policy.margin * alpha + 1e-9;
    VectorXd u = u0 + alpha * r.direction;
    for (int k = 0; k < 60 && cd.margin(u) < 0.0; ++k) {
      alpha = 2.0 * alpha + 1e-6;
      u = u0 + alpha * r.direction;
    }
    if (cd.margin(u) < -1e-8) {
      r.feasible = false;
    } else {
      r.witness = u;
    }
  }
  return r;
}

}  // namespace safecbf
