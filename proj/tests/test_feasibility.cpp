#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "safecbf/feasibility.hpp"
#include "safecbf/verify.hpp"
#include "test_util.hpp"

using namespace safecbf;
using testutil::gauss;

namespace {

Eigen::RowVectorXd row(std::initializer_list<double> v) {
  Eigen::RowVectorXd r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r(i++) = x;
  return r;
}

// Smallest eigenvalue of a symmetric 3x3 from the trigonometric solution of
// its characteristic cubic.
double cubic_min_eig(const MatrixXd& a) {
  const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
  const double q = a.trace() / 3.0;
  const double p2 = (a(0, 0) - q) * (a(0, 0) - q) + (a(1, 1) - q) * (a(1, 1) - q) + (a(2, 2) - q) * (a(2, 2) - q) +
                    2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  const MatrixXd b = (a - q * MatrixXd::Identity(3, 3)) / p;
  const double r = std::clamp(b.determinant() / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  return q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
}

}  // namespace

TEST_CASE("tradeoff matrix") {
  const auto cd = ConstraintData::from_covariance(0.0, row({2.0}), MatrixXd::Identity(2, 2), 0.0, 1.0);
  const MatrixXd f = tradeoff_matrix(cd);
  REQUIRE(f.rows() == 1);
  CHECK(f(0, 0) == doctest::Approx(-3.0));

  std::mt19937_64 rng(1);
  const MatrixXd cov = testutil::random_spd(rng, 3);
  const auto zero = ConstraintData::from_covariance(0.5, row({0.0, 0.0}), cov, 0.1, 1.5);
  CHECK((tradeoff_matrix(zero) - 2.25 * cov.bottomRightCorner(2, 2)).norm() < 1e-14);
  CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(tradeoff_matrix(zero)).eigenvalues().minCoeff() > 0.0);

  for (int trial = 0; trial < 100; ++trial) {
    const auto c = ConstraintData::from_covariance(0.0, gauss(rng, 3, 2.0).transpose(), testutil::random_spd(rng, 4),
                                                   0.0, testutil::uniform(rng, 0.5, 3.0));
    const VectorXd ev = Eigen::SelfAdjointEigenSolver<MatrixXd>(tradeoff_matrix(c)).eigenvalues();
    CHECK((ev.array() < 0.0).count() <= 1);
  }
}

TEST_CASE("lambda_dagger") {
  MatrixXd f1(1, 1);
  f1 << -3.0;
  const auto e1 = lambda_dagger(f1);
  CHECK(e1.value == doctest::Approx(-3.0));
  CHECK(std::abs(e1.vector(0)) == doctest::Approx(1.0));

  MatrixXd f2 = MatrixXd::Zero(2, 2);
  f2(0, 0) = 1.0;
  f2(1, 1) = -2.0;
  const auto e2 = lambda_dagger(f2);
  CHECK(e2.value == doctest::Approx(-2.0));
  CHECK(std::abs(e2.vector(0)) < 1e-14);
  CHECK(std::abs(e2.vector(1)) == doctest::Approx(1.0));

  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    MatrixXd a(3, 3);
    for (int i = 0; i < 3; ++i) a.col(i) = gauss(rng, 3);
    const MatrixXd s = 0.5 * (a + a.transpose());
    const auto e = lambda_dagger(s);
    CHECK(e.value == doctest::Approx(cubic_min_eig(s)).epsilon(1e-8));
    CHECK(e.vector.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((s * e.vector - e.value * e.vector).norm() <= 1e-8);
  }
}

TEST_CASE("necessary condition") {
  const auto zero = ConstraintData::from_covariance(0.0, row({0.0}), MatrixXd::Identity(2, 2), 0.0, 0.5);
  CHECK_FALSE(necessary_condition(zero));
  // psi = [3, 4], Sigma_B = I, beta = 5: 25 >= 25 on the boundary.
  double value = 0.0;
  const auto edge = ConstraintData::from_covariance(1.0, row({4.0}), MatrixXd::Identity(2, 2), 2.0, 5.0);
  CHECK(necessary_condition(edge, &value));
  CHECK(value == doctest::Approx(25.0));

  // The necessary condition holds iff H is not positive definite.
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const int m = 1 + trial % 2;
    const auto cd = random_constraint_data(rng, m);
    double v = 0.0;
    const bool nec = necessary_condition(cd, &v);
    if (std::abs(v - cd.beta * cd.beta) < 1e-6 * std::max(1.0, v)) continue;
    const double hmin = Eigen::SelfAdjointEigenSolver<MatrixXd>(h_matrix(cd).h).eigenvalues().minCoeff();
    CHECK(nec == (hmin <= 0.0));
  }
}

TEST_CASE("H matrix blocks") {
  std::mt19937_64 rng(4);
  const MatrixXd cov = testutil::random_spd(rng, 3);
  const auto pure = ConstraintData::from_covariance(0.0, row({0.0, 0.0}), cov, 0.0, 1.0);
  CHECK((h_matrix(pure).h - cov).norm() <= 1e-12 * cov.norm());

  for (int trial = 0; trial < 50; ++trial) {
    const auto cd = random_constraint_data(rng, 1 + trial % 2);
    const HMatrix hm = h_matrix(cd);
    CHECK((hm.huu() - tradeoff_matrix(cd)).norm() <= 1e-12 * std::max(1.0, hm.huu().norm()));
    CHECK((hm.h - hm.h.transpose()).norm() == 0.0);
    // [1 u] H [1 u]^T = beta^2 sigma^2(u) - (linear part)^2.
    const VectorXd u = gauss(rng, cd.input_dim(), 2.0);
    const double sig = (cd.sqrt_g * u + cd.sqrt_f).norm();
    const double lin = linear_part(cd, u);
    CHECK(hm.quadratic(u) == doctest::Approx(cd.beta * cd.beta * sig * sig - lin * lin).epsilon(1e-9));
  }
}

TEST_CASE("classify: worked instances") {
  const auto hyp = ConstraintData::from_covariance(0.0, row({2.0}), MatrixXd::Identity(2, 2), 0.0, 1.0);
  const auto r1 = classify(hyp);
  CHECK(r1.kind() == FeasibilityCase::hyperbolic);
  CHECK(r1.feasible);
  REQUIRE(r1.witness);
  CHECK(hyp.margin(*r1.witness) >= -1e-8);

  // L_gB = 0, Sigma_B = I, lf + gamma B = 2, beta = 1: elliptic with u1 = 0.
  const auto ell = ConstraintData::from_covariance(2.0, row({0.0}), MatrixXd::Identity(2, 2), 0.0, 1.0);
  const auto r2 = classify(ell);
  CHECK(r2.geometry == FeasibilityCase::elliptic);
  CHECK(r2.feasible);
  CHECK(r2.necessary_value == doctest::Approx(4.0));
  REQUIRE(r2.witness);
  CHECK(std::abs((*r2.witness)(0)) < 1e-12);
  // 1-D grid cross-check of the same instance.
  double best = -1e300;
  for (int i = -5000; i <= 5000; ++i) best = std::max(best, ell.margin(VectorXd::Constant(1, i * 1e-2)));
  CHECK(best == doctest::Approx(1.0).epsilon(1e-9));

  // Same geometry, negative drift: infeasible.
  const auto bad = ConstraintData::from_covariance(-2.0, row({0.0}), MatrixXd::Identity(2, 2), 0.0, 1.0);
  CHECK(classify(bad).kind() == FeasibilityCase::infeasible);
}

TEST_CASE("classify agrees with the grid oracle and witnesses pass the H check") {
  const VerifyReport rep = verify_feasibility(120, 77);
  CHECK(rep.instances == 120);
  CHECK(rep.checked > 100);
  CHECK(rep.failures == 0);
}

TEST_CASE("classify: increasing beta never turns infeasible into hyperbolic") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto cd = random_constraint_data(rng, 1 + trial % 2);
    const auto before = classify(cd);
    const double l0 = before.lambda;
    cd.beta *= testutil::uniform(rng, 1.01, 3.0);
    const auto after = classify(cd);
    CHECK(after.lambda >= l0 - 1e-12);
    if (before.kind() == FeasibilityCase::infeasible) CHECK(after.kind() != FeasibilityCase::hyperbolic);
  }
}

TEST_CASE("u_safe") {
  const auto pos = ConstraintData::from_covariance(0.0, row({2.0}), MatrixXd::Identity(2, 2), 0.0, 1.0);
  const VectorXd u = u_safe(pos, AlphaPolicy{0.0, 5.0});
  CHECK(u(0) == doctest::Approx(5.0));
  const auto neg = ConstraintData::from_covariance(0.0, row({-2.0}), MatrixXd::Identity(2, 2), 0.0, 1.0);
  CHECK(u_safe(neg, AlphaPolicy{0.0, 5.0})(0) == doctest::Approx(-5.0));

  const auto none = ConstraintData::from_covariance(0.0, row({0.5}), MatrixXd::Identity(2, 2), 0.0, 1.0);
  CHECK_THROWS_AS(u_safe(none), std::domain_error);

  std::mt19937_64 rng(6);
  int hyperbolic = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const auto cd = random_constraint_data(rng, 1 + trial % 2);
    if (!(lambda_dagger(tradeoff_matrix(cd)).value < -kTolEig)) continue;
    ++hyperbolic;
    const VectorXd us = u_safe(cd);
    CHECK(cd.margin(us) >= -1e-8 * std::max(1.0, us.norm()));
    CHECK(h_check(cd, us));
  }
  CHECK(hyperbolic > 50);
}

TEST_CASE("min_alpha") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    // Only L_gB carries mean: the cone root is the binding one.
    MatrixXd cov = testutil::random_spd(rng, 2);
    const auto cd = ConstraintData::from_covariance(0.0, row({testutil::uniform(rng, 2.0, 5.0)}), cov, 0.0, 1.0);
    if (!(lambda_dagger(tradeoff_matrix(cd)).value < -kTolEig)) continue;
    const double a = min_alpha(cd);
    const HMatrix hm = h_matrix(cd);
    auto q = [&](double alpha) { return hm.quadratic(VectorXd::Constant(1, alpha)); };
    double lo = 0.0, hi = 1.0;
    while (q(hi) > 0.0) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (q(mid) > 0.0 ? lo : hi) = mid;
    }
    CHECK(a == doctest::Approx(hi).epsilon(1e-9));
  }

  // Feasible at u = 0 already.
  const auto slack = ConstraintData::from_covariance(10.0, row({2.0}), MatrixXd::Identity(2, 2), 0.0, 1.0);
  CHECK(min_alpha(slack) == 0.0);

  for (int trial = 0; trial < 200; ++trial) {
    const auto cd = random_constraint_data(rng, 1 + trial % 2);
    const auto eig = lambda_dagger(tradeoff_matrix(cd));
    if (!(eig.value < -kTolEig)) continue;
    const double a = min_alpha(cd);
    if (!std::isfinite(a)) continue;
    const VectorXd e = classify(cd).direction;
    for (double f : {1.01, 1.5, 3.0, 10.0, 100.0}) {
      const VectorXd u = (f * a + 1e-12) * e;
      const double scale = std::max(1.0, u.squaredNorm());
      CHECK(h_matrix(cd).quadratic(u) <= 1e-9 * scale);
      CHECK(linear_part(cd, u) >= -1e-9 * std::sqrt(scale));
    }
  }
}
