#include "safecbf/learner.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace safecbf {

std::string_view to_string(Trigger t) {
  switch (t) {
    case Trigger::none: return "none";
    case Trigger::time: return "time";
    case Trigger::event: return "event";
  }
  return "unknown";
}

double default_epsilon(double lambda0) { return std::max(0.05 * std::abs(lambda0), 1e-3); }

LambdaInfo get_lambda_dagger(const VectorXd& x, const Dataset& d, const Plant& nominal, const FilterConfig& cfg) {
  LambdaInfo info;
  info.cd = build_constraint_data(x, d, nominal, cfg);
  const auto eig = lambda_dagger(tradeoff_matrix(info.cd));
  info.lambda = eig.value;
  info.direction = eig.vector;
  return info;
}

void record_measurement(LearnerState& st, const Scenario& sc, const VectorXd& x, const VectorXd& u,
                        std::mt19937_64& rng) {
  const double zb = measure(sc.truth, sc.nominal, x, u, rng, sc.learner.noise);
  st.db.add_measurement(x, u, zb);
  if (st.dv) {
    double zv = delta_v(sc.truth, sc.nominal, x, u);
    if (sc.learner.noise > 0.0) zv += std::uniform_real_distribution<double>(-sc.learner.noise, sc.learner.noise)(rng);
    st.dv->add_measurement(x, u, zv);
  }
  ++st.measurements;
}

namespace {

// |mu_B - Delta_B| <= beta sigma_B at (x, u), using the data behind cd.
bool bound_holds(const ConstraintData& cd, const Scenario& sc, const VectorXd& x, const VectorXd& u) {
  const auto lie = lie_derivatives(sc.nominal, x);
  const double mu = (cd.lf_hat - lie.lf) + (cd.lg_hat - lie.lg).dot(u);
  const double sigma = (cd.sqrt_g * u + cd.sqrt_f).norm();
  return std::abs(mu - delta_b(sc.truth, sc.nominal, x, u)) <= cd.beta * sigma;
}

}  // namespace

StepOutcome learner_step(LearnerState& st, const VectorXd& x, double t, const StepContext& ctx) {
  const Scenario& sc = ctx.sc;
  const auto& fcfg = sc.filter;
  StepOutcome out;
  const LambdaInfo info = get_lambda_dagger(x, st.db, sc.nominal, fcfg);
  out.cd = info.cd;
  out.lambda = info.lambda;
  out.beta = info.cd.beta;
  const FeasibilityReport report = classify(info.cd, sc.learner.alpha);
  out.kind = report.kind();
  const VectorXd u_ref = sc.reference(x, t);
  const bool time_trigger = (st.step % sc.learner.tau_steps()) == 0;

  if (!ctx.event_trigger || info.lambda < -ctx.epsilon) {
    out.mode = FilterMode::socp;
    if (!report.feasible) {
      out.kind = FeasibilityCase::infeasible;
      out.status = "infeasible";
      out.u = u_ref;
      out.slack = info.cd.margin(u_ref);
      out.bound_ok = bound_holds(info.cd, sc, x, out.u);
      ++st.step;
      return out;
    }
    std::optional<ClfData> clf;
    if (fcfg.clf.enabled && st.dv) clf = clf_soft_constraint(x, *st.dv, sc.nominal, fcfg);
    const FilterResult res = gp_cbf_socp(u_ref, info.cd, fcfg, clf, report.witness);
    out.u = res.u;
    out.slack = res.slack;
    out.status = std::string(to_string(res.status));
    out.bound_ok = bound_holds(info.cd, sc, x, out.u);
    if (time_trigger) {
      record_measurement(st, sc, x, out.u, ctx.rng);
      out.trigger = Trigger::time;
      TriggerEvent ev{Trigger::time, t, st.step, info.lambda, 0.0, 0};
      ev.lambda_after = get_lambda_dagger(x, st.db, sc.nominal, fcfg).lambda;
      st.events.push_back(ev);
    }
    ++st.step;
    return out;
  }

  // Backup direction plus an event-triggered measurement along it.
  out.mode = FilterMode::u_safe;
  out.status = "u_safe";
  if (!(info.lambda < -kTolEig)) {
    std::ostringstream os;
    os << "lambda_dagger = " << info.lambda << " >= 0 at t = " << t << ": no safe direction left";
    throw SafetyBudgetExceeded(os.str());
  }
  AlphaPolicy policy = sc.learner.alpha;
  TriggerEvent ev{Trigger::event, t, st.step, info.lambda, 0.0, 0};
  VectorXd u = u_safe(info.cd, policy);
  out.bound_ok = bound_holds(info.cd, sc, x, u);
  record_measurement(st, sc, x, u, ctx.rng);
  double after = get_lambda_dagger(x, st.db, sc.nominal, fcfg).lambda;
  while (!(after < -kTolEig)) {
    if (ev.retries >= sc.learner.max_retries) {
      std::ostringstream os;
      os << "alpha escalation exhausted at t = " << t << " (lambda " << info.lambda << " -> " << after << ")";
      throw SafetyBudgetExceeded(os.str());
    }
    ++ev.retries;
    policy.margin *= sc.learner.escalation;
    policy.floor *= sc.learner.escalation;
    u = u_safe(info.cd, policy);
    record_measurement(st, sc, x, u, ctx.rng);
    after = get_lambda_dagger(x, st.db, sc.nominal, fcfg).lambda;
  }
  ev.lambda_after = after;
  st.events.push_back(ev);
  out.u = u;
  out.slack = info.cd.margin(u);
  out.trigger = Trigger::event;
  ++st.step;
  return out;
}

}  // namespace safecbf
