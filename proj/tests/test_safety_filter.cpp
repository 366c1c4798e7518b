#include <cmath>
#include <random>

#include "doctest.h"
#include "safecbf/learner.hpp"
#include "safecbf/safety_filter.hpp"
#include "safecbf/scenario.hpp"
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

// x' = f + g u on the line with B(x) = x.
Plant line_plant(double f, double g) {
  Plant p;
  p.label = "line";
  p.n = 1;
  p.m = 1;
  p.f = [f](const VectorXd&) { return VectorXd::Constant(1, f); };
  p.g = [g](const VectorXd&) { return MatrixXd::Constant(1, 1, g); };
  p.barrier = [](const VectorXd& x) { return x(0); };
  p.barrier_grad = [](const VectorXd&) { return VectorXd::Ones(1); };
  return p;
}

FilterResult filter(const VectorXd& u_ref, const ConstraintData& cd, const FilterConfig& cfg = {}) {
  const auto rep = classify(cd);
  REQUIRE(rep.feasible);
  return gp_cbf_socp(u_ref, cd, cfg, std::nullopt, rep.witness);
}

}  // namespace

TEST_CASE("cbf_qp closed form") {
  const Plant p = line_plant(-4.0, 2.0);  // a = 2, b = -4 at x = 0
  const VectorXd x = VectorXd::Zero(1);
  // u_ref - ((a u_ref + b) / a^2) a = 0 - (-4 / 4) 2 = 2.
  CHECK(cbf_qp(x, VectorXd::Zero(1), p, 1.0)(0) == doctest::Approx(2.0));
  CHECK(cbf_qp(x, VectorXd::Constant(1, 3.0), p, 1.0)(0) == doctest::Approx(3.0));
  // Margin tightens b.
  CHECK(cbf_qp(x, VectorXd::Zero(1), p, 1.0, 0.5)(0) == doctest::Approx(2.25));
  // a = 0, b < 0: no input helps.
  CHECK_THROWS(cbf_qp(x, VectorXd::Zero(1), line_plant(-1.0, 0.0), 1.0));

  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const Plant q = line_plant(testutil::uniform(rng, -5, 5), testutil::uniform(rng, -3, 3));
    const VectorXd xs = VectorXd::Constant(1, testutil::uniform(rng, 0, 2));
    const VectorXd u = cbf_qp(xs, gauss(rng, 1, 3.0), q, 1.0);
    const auto lie = lie_derivatives(q, xs);
    CHECK(lie.lg.dot(u) + lie.lf + xs(0) >= -1e-10);
  }
}

TEST_CASE("gp_cbf_socp: inactive constraint returns u_ref") {
  const auto cd = ConstraintData::from_covariance(5.0, row({2.0}), 0.01 * MatrixXd::Identity(2, 2), 1.0, 2.0);
  const VectorXd u_ref = VectorXd::Constant(1, 0.3);
  REQUIRE(cd.margin(u_ref) > 0.0);
  const auto res = filter(u_ref, cd);
  CHECK(res.mode == FilterMode::socp);
  CHECK(std::abs(res.u(0) - 0.3) <= 1e-6);

  // No uncertainty in the u dependence, constraint inactive.
  MatrixXd cov = MatrixXd::Zero(3, 3);
  cov(0, 0) = 0.04;
  cov.bottomRightCorner(2, 2) = 1e-14 * MatrixXd::Identity(2, 2);
  const auto cd2 = ConstraintData::from_covariance(3.0, row({1.0, -1.0}), cov, 0.0, 2.0);
  VectorXd u2(2);
  u2 << 0.2, 0.1;
  CHECK((filter(u2, cd2).u - u2).norm() <= 1e-6);
}

TEST_CASE("gp_cbf_socp: violated reference lands on the boundary at the closest feasible point") {
  const auto cd = ConstraintData::from_covariance(-1.0, row({2.0}), 0.05 * MatrixXd::Identity(2, 2), 0.0, 2.0);
  const VectorXd u_ref = VectorXd::Constant(1, -1.0);
  REQUIRE(cd.margin(u_ref) < 0.0);
  const auto res = filter(u_ref, cd);
  CHECK(std::abs(res.slack) <= 1e-6);
  CHECK(res.slack >= -1e-8);
  // Scalar grid oracle for the closest feasible input.
  double best = 1e300;
  for (int i = 0; i <= 400000; ++i) {
    const double u = -5.0 + i * 2.5e-5;
    if (cd.margin(VectorXd::Constant(1, u)) >= 0.0) best = std::min(best, std::abs(u - u_ref(0)));
  }
  CHECK(std::abs(res.u(0) - u_ref(0)) == doctest::Approx(best).epsilon(1e-4));
}

TEST_CASE("gp_cbf_socp: minimal invasiveness against a 2-D grid") {
  std::mt19937_64 rng(32);
  int checked = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const auto cd = ConstraintData::from_covariance(testutil::uniform(rng, -2, 1), gauss(rng, 2, 1.5).transpose(),
                                                    0.1 * testutil::random_spd(rng, 3, 0.05), 0.0, 2.0);
    const auto rep = classify(cd);
    if (!rep.feasible) continue;
    const VectorXd u_ref = gauss(rng, 2);
    const auto res = gp_cbf_socp(u_ref, cd, {}, std::nullopt, rep.witness);
    CHECK(res.slack >= -1e-8);
    const double dist = (res.u - u_ref).norm();
    double grid_best = 1e300;
    for (int i = -200; i <= 200; ++i)
      for (int j = -200; j <= 200; ++j) {
        VectorXd u(2);
        u << 0.05 * i, 0.05 * j;
        if (cd.margin(u) >= 0.0) grid_best = std::min(grid_best, (u - u_ref).norm());
      }
    if (grid_best < 1e300) CHECK(dist <= grid_best + 1e-6);
    ++checked;
  }
  CHECK(checked > 10);
}

TEST_CASE("gp_cbf_socp: zero-mean GP pushes u toward the nominal L_gB") {
  const Eigen::RowVectorXd lg = row({1.0, 0.5});
  const auto cd = ConstraintData::from_covariance(-0.5, lg, 0.02 * MatrixXd::Identity(3, 3), 0.0, 2.0);
  const VectorXd u_ref = VectorXd::Zero(2);
  REQUIRE(cd.margin(u_ref) < 0.0);
  const auto res = filter(u_ref, cd);
  CHECK(lg.dot(res.u - u_ref) > 0.0);
}

TEST_CASE("build_constraint_data on the ACC scenario") {
  const Scenario sc = load_scenario(testutil::config_path("acc.toml"));
  const Dataset empty(sc.kernel_b);
  const auto cd = build_constraint_data(sc.x0, empty, sc.nominal, sc.filter);
  const auto lie = lie_derivatives(sc.nominal, sc.x0);
  CHECK(cd.lf_hat == doctest::Approx(lie.lf).epsilon(1e-14));
  // d/dt (z - 1.8 v) along g = [scale / m; 0].
  CHECK(cd.lg_hat(0) == doctest::Approx(-1.8 * 1000.0 / 1650.0).epsilon(1e-14));
  CHECK(cd.cov(0, 0) == doctest::Approx(0.01));
  CHECK(cd.cov(1, 1) == doctest::Approx(0.28));
  CHECK(cd.cov(0, 1) == 0.0);
  CHECK(cd.gamma_b == doctest::Approx(sc.filter.gamma_c * sc.nominal.barrier(sc.x0) - sc.filter.sample_margin));
  CHECK(cd.beta == 2.0);

  // beta sigma_B(x, u) from the GP equals the cone left-hand side.
  Dataset d(sc.kernel_b);
  std::mt19937_64 rng(33);
  for (int k = 0; k < 10; ++k) {
    VectorXd x(2);
    x << testutil::uniform(rng, 15, 25), testutil::uniform(rng, 40, 100);
    const VectorXd u = gauss(rng, 1, 3.0);
    d.add_measurement(x, u, measure(sc.truth, sc.nominal, x, u, rng, 0.01));
  }
  const auto cd2 = build_constraint_data(sc.x0, d, sc.nominal, sc.filter);
  for (double uu : {-4.0, -0.5, 0.0, 2.0}) {
    const VectorXd u = VectorXd::Constant(1, uu);
    const double sigma = std::sqrt(predict(sc.x0, u, d).variance);
    CHECK(cd2.beta * sigma == doctest::Approx(cd2.beta * (cd2.sqrt_g * u + cd2.sqrt_f).norm()).epsilon(1e-10));
  }
}

TEST_CASE("CLF soft constraint accelerates toward v_d when the CBF is inactive") {
  const Scenario sc = load_scenario(testutil::config_path("acc.toml"));
  VectorXd x(2);
  x << 18.0, 100.0;
  const Dataset empty(sc.kernel_b);
  const auto cd = build_constraint_data(x, empty, sc.nominal, sc.filter);
  const auto rep = classify(cd, sc.learner.alpha);
  REQUIRE(rep.feasible);
  const ClfData clf = clf_soft_constraint(x, Dataset(*sc.kernel_v), sc.nominal, sc.filter);
  const auto res = gp_cbf_socp(VectorXd::Zero(1), cd, sc.filter, clf, rep.witness);
  CHECK(res.u(0) > 0.0);
  CHECK(res.slack >= -1e-8);

  // Large penalty drives the relaxation to zero when both constraints can hold.
  FilterConfig stiff = sc.filter;
  stiff.clf.penalty = 1e6;
  const auto hard = gp_cbf_socp(VectorXd::Zero(1), cd, stiff, clf, rep.witness);
  CHECK(hard.relaxation <= 1e-4);

  // Without the CLF the filter returns u_ref = 0.
  const auto plain = gp_cbf_socp(VectorXd::Zero(1), cd, sc.filter, std::nullopt, rep.witness);
  CHECK(std::abs(plain.u(0)) <= 1e-6);

  // Known-model version agrees on the sign.
  CHECK(cbf_clf_qp(x, VectorXd::Zero(1), sc.nominal, sc.filter).u(0) > 0.0);
}

TEST_CASE("filter config validation") {
  FilterConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.gamma_c = 0.0;
  CHECK_THROWS(cfg.validate());
  cfg.gamma_c = 1.0;
  cfg.sample_margin = -1.0;
  CHECK_THROWS(cfg.validate());
  cfg.sample_margin = 0.0;
  cfg.clf.enabled = true;
  cfg.clf.penalty = 0.0;
  CHECK_THROWS(cfg.validate());
}
