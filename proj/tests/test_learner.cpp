#include <cmath>
#include <random>

#include "doctest.h"
#include "safecbf/learner.hpp"
#include "safecbf/scenario.hpp"
#include "test_util.hpp"

using namespace safecbf;

namespace {

const Scenario& acc() {
  static const Scenario sc = load_scenario(testutil::config_path("acc.toml"));
  return sc;
}

LearnerState fresh(const Scenario& sc) {
  LearnerState st{Dataset(sc.kernel_b), std::nullopt, 0, {}, 0};
  if (sc.kernel_v) st.dv = Dataset(*sc.kernel_v);
  return st;
}

}  // namespace

TEST_CASE("default epsilon") {
  CHECK(default_epsilon(-0.4) == doctest::Approx(0.02));
  CHECK(default_epsilon(-1e-4) == doctest::Approx(1e-3));
}

TEST_CASE("lambda_dagger at the ACC start with no data is negative") {
  const Scenario& sc = acc();
  const auto info = get_lambda_dagger(sc.x0, Dataset(sc.kernel_b), sc.nominal, sc.filter);
  CHECK(info.lambda < 0.0);
  CHECK(info.direction.norm() == doctest::Approx(1.0));
  // Scalar case: lambda = beta^2 Sigma_g - lg^2.
  const double lg = -1.8 * 1000.0 / 1650.0;
  CHECK(info.lambda == doctest::Approx(4.0 * 0.28 - lg * lg).epsilon(1e-12));
}

TEST_CASE("lambda_dagger is monotone in beta and changes sign") {
  Scenario sc = acc();
  const Dataset d(sc.kernel_b);
  double prev = -1e300;
  for (double b : {1e-3, 0.1, 0.5, 1.0, 2.0, 3.0, 10.0, 100.0}) {
    sc.filter.beta.beta0 = b;
    const double l = get_lambda_dagger(sc.x0, d, sc.nominal, sc.filter).lambda;
    CHECK(l >= prev);
    prev = l;
  }
  sc.filter.beta.beta0 = 1e-3;
  CHECK(get_lambda_dagger(sc.x0, d, sc.nominal, sc.filter).lambda < 0.0);
  sc.filter.beta.beta0 = 100.0;
  CHECK(get_lambda_dagger(sc.x0, d, sc.nominal, sc.filter).lambda > 0.0);
}

TEST_CASE("lambda_dagger is continuous along a state path") {
  const Scenario& sc = acc();
  Dataset d(sc.kernel_b);
  std::mt19937_64 rng(51);
  for (int k = 0; k < 12; ++k) {
    VectorXd x(2);
    x << testutil::uniform(rng, 14, 24), testutil::uniform(rng, 30, 100);
    const VectorXd u = VectorXd::Constant(1, testutil::uniform(rng, -4, 1));
    d.add_measurement(x, u, measure(sc.truth, sc.nominal, x, u, rng, 0.01));
  }
  auto max_jump = [&](int n) {
    double worst = 0.0, prev = 0.0;
    for (int i = 0; i <= n; ++i) {
      VectorXd x(2);
      x << 14.0 + 10.0 * i / n, 30.0 + 70.0 * i / n;
      const double l = get_lambda_dagger(x, d, sc.nominal, sc.filter).lambda;
      if (i > 0) worst = std::max(worst, std::abs(l - prev));
      prev = l;
    }
    return worst;
  };
  const double j1 = max_jump(2000), j2 = max_jump(4000);
  // Lipschitz: halving the step roughly halves the largest jump.
  CHECK(j2 <= 0.75 * j1);
  CHECK(j2 < 1e-2);
}

TEST_CASE("learner step branches") {
  const Scenario& sc = acc();
  const double l0 = get_lambda_dagger(sc.x0, Dataset(sc.kernel_b), sc.nominal, sc.filter).lambda;
  REQUIRE(l0 < 0.0);
  std::mt19937_64 rng(52);

  SUBCASE("well inside, off the time grid: SOCP, no data") {
    LearnerState st = fresh(sc);
    st.step = 1;
    const StepContext ctx{sc, std::abs(l0) / 10.0, true, rng};
    const auto o = learner_step(st, sc.x0, 0.01, ctx);
    CHECK(o.mode == FilterMode::socp);
    CHECK(o.trigger == Trigger::none);
    CHECK(st.db.size() == 0);
    CHECK(o.slack >= -1e-8);
    CHECK(st.step == 2);
  }
  SUBCASE("on the time grid: SOCP plus a time-triggered measurement") {
    LearnerState st = fresh(sc);
    const StepContext ctx{sc, std::abs(l0) / 10.0, true, rng};
    const auto o = learner_step(st, sc.x0, 0.0, ctx);
    CHECK(o.mode == FilterMode::socp);
    CHECK(o.trigger == Trigger::time);
    CHECK(st.db.size() == 1);
    CHECK(st.dv->size() == 1);
    REQUIRE(st.events.size() == 1);
    CHECK(st.events[0].kind == Trigger::time);
  }
  SUBCASE("near zero: u_safe plus an event-triggered measurement that restores lambda < 0") {
    LearnerState st = fresh(sc);
    st.step = 1;
    const StepContext ctx{sc, 2.0 * std::abs(l0), true, rng};
    const auto o = learner_step(st, sc.x0, 0.01, ctx);
    CHECK(o.mode == FilterMode::u_safe);
    CHECK(o.trigger == Trigger::event);
    CHECK(st.db.size() >= 1);
    REQUIRE(st.events.size() == 1);
    CHECK(st.events[0].lambda_after < 0.0);
    CHECK(st.events[0].lambda_after < st.events[0].lambda_before);
    // u_safe points along the braking direction (L_gB < 0 for ACC).
    CHECK(o.u(0) < 0.0);
    CHECK(o.cd.margin(o.u) >= -1e-8);
  }
  SUBCASE("time-only ablation never takes the u_safe branch") {
    LearnerState st = fresh(sc);
    st.step = 1;
    const StepContext ctx{sc, 2.0 * std::abs(l0), false, rng};
    CHECK(learner_step(st, sc.x0, 0.01, ctx).mode == FilterMode::socp);
  }
}

TEST_CASE("learner step refuses to start without a safe direction") {
  Scenario sc = acc();
  sc.filter.beta.beta0 = 100.0;
  LearnerState st = fresh(sc);
  std::mt19937_64 rng(53);
  const StepContext ctx{sc, 0.01, true, rng};
  CHECK_THROWS_AS(learner_step(st, sc.x0, 0.0, ctx), SafetyBudgetExceeded);
}

TEST_CASE("learner config validation") {
  LearnerConfig lc;
  CHECK_NOTHROW(lc.validate());
  CHECK(lc.steps() == 5000);
  CHECK(lc.tau_steps() == 50);
  CHECK(lc.substeps() == 10);
  lc.epsilon = -1.0;
  CHECK_THROWS(lc.validate());
  lc.epsilon.reset();
  lc.tau = 0.001;
  CHECK_THROWS(lc.validate());
}
