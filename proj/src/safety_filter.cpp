#include "safecbf/safety_filter.hpp"

#include <cmath>
#include <sstream>

namespace safecbf {

void FilterConfig::validate() const {
  if (!(gamma_c > 0.0)) throw std::invalid_argument("filter: gamma_c must be > 0");
  if (!(sample_margin >= 0.0)) throw std::invalid_argument("filter: sample_margin must be >= 0");
  if (clf.enabled && !(clf.penalty > 0.0)) throw std::invalid_argument("filter: CLF penalty must be > 0");
  if (clf.enabled && !(clf.rate > 0.0)) throw std::invalid_argument("filter: CLF rate must be > 0");
}

std::string_view to_string(FilterMode m) {
  switch (m) {
    case FilterMode::socp: return "socp";
    case FilterMode::qp_nominal: return "qp_nominal";
    case FilterMode::qp_oracle: return "qp_oracle";
    case FilterMode::u_safe: return "u_safe";
  }
  return "unknown";
}

ConstraintData build_constraint_data(const VectorXd& x, const Dataset& d, const Plant& nominal,
                                     const FilterConfig& cfg) {
  const auto lie = lie_derivatives(nominal, x);
  PredictionBundle b = posterior_bundle(x, d);
  b.with_nominal(lie.lf, lie.lg);
  return ConstraintData::from_bundle(b, cfg.gamma_c * nominal.barrier(x) - cfg.sample_margin, beta(d.size(), cfg.beta));
}

ClfData clf_soft_constraint(const VectorXd& x, const Dataset& dv, const Plant& nominal, const FilterConfig& cfg) {
  const auto lie = clf_lie_derivatives(nominal, x);
  PredictionBundle b = posterior_bundle(x, dv);
  b.with_nominal(lie.lf, lie.lg);
  ClfData c;
  c.lf_hat = b.lf_hat;
  c.lg_hat = b.lg_hat;
  c.sqrt_f = b.sqrt_f();
  c.sqrt_g = b.sqrt_g();
  c.v = nominal.clf(x);
  c.beta = beta(dv.size(), cfg.beta);
  return c;
}

ClfData clf_from_model(const VectorXd& x, const Plant& model) {
  const auto lie = clf_lie_derivatives(model, x);
  ClfData c;
  c.lf_hat = lie.lf;
  c.lg_hat = lie.lg;
  c.sqrt_f = VectorXd::Zero(model.m + 1);
  c.sqrt_g = MatrixXd::Zero(model.m + 1, model.m);
  c.v = model.clf(x);
  c.beta = 0.0;
  return c;
}

namespace {

// Decision vector w = [u; t; d?].
struct Layout {
  int m;
  bool clf;
  int t() const { return m; }
  int d() const { return m + 1; }
  int size() const { return m + 1 + (clf ? 1 : 0); }
};

SocConstraint epigraph(const Layout& lay, const VectorXd& u_ref) {
  SocConstraint k;
  const int n = lay.size();
  k.c = VectorXd::Zero(n);
  k.c(lay.t()) = 1.0;
  if (!lay.clf) {
    // ||u - u_ref|| <= t
    k.a = MatrixXd::Zero(lay.m, n);
    k.a.leftCols(lay.m).setIdentity();
    k.b = -u_ref;
    return k;
  }
  // ||u - u_ref||^2 <= t  as  ||[2(u - u_ref); t - 1]|| <= t + 1
  k.a = MatrixXd::Zero(lay.m + 1, n);
  k.a.topLeftCorner(lay.m, lay.m) = 2.0 * MatrixXd::Identity(lay.m, lay.m);
  k.a(lay.m, lay.t()) = 1.0;
  k.b.resize(lay.m + 1);
  k.b.head(lay.m) = -2.0 * u_ref;
  k.b(lay.m) = -1.0;
  k.d = 1.0;
  return k;
}

// beta ||Sg u + sf|| <= lg u + drift, as a half-space when the cone part vanishes.
SocConstraint chance(const Layout& lay, double beta, const MatrixXd& sg, const VectorXd& sf,
                     const Eigen::RowVectorXd& lg, double drift) {
  SocConstraint k;
  const int n = lay.size();
  k.c = VectorXd::Zero(n);
  k.c.head(lay.m) = lg.transpose();
  k.d = drift;
  if (beta * (sg.cwiseAbs().maxCoeff() + sf.cwiseAbs().maxCoeff()) == 0.0) {
    k.a.resize(0, n);
    k.b.resize(0);
    return k;
  }
  k.a = MatrixXd::Zero(sg.rows(), n);
  k.a.leftCols(lay.m) = beta * sg;
  k.b = beta * sf;
  return k;
}

void add_clf(SocpProblem& p, const Layout& lay, const ClfData& c, const ClfOptions& opt) {
  SocConstraint k = chance(lay, c.beta, c.sqrt_g, c.sqrt_f, -c.lg_hat, -c.lf_hat - opt.rate * c.v);
  k.c(lay.d()) = 1.0;
  p.cones.push_back(std::move(k));
  SocConstraint pos;
  pos.a.resize(0, lay.size());
  pos.b.resize(0);
  pos.c = VectorXd::Zero(lay.size());
  pos.c(lay.d()) = 1.0;
  p.cones.push_back(std::move(pos));
  p.cost(lay.d()) = opt.penalty;
}

VectorXd warm_point(const Layout& lay, const VectorXd& u, const VectorXd& u_ref, const SocpProblem& p) {
  VectorXd w = VectorXd::Zero(lay.size());
  w.head(lay.m) = u;
  const double r = (u - u_ref).norm();
  w(lay.t()) = r * r + r + 1.0;
  if (lay.clf) {
    // Raise d until the CLF cone (second to last) holds strictly.
    w(lay.d()) = 0.0;
    const double mg = p.cones[p.cones.size() - 2].margin(w);
    w(lay.d()) = std::max(0.0, -mg) + 1.0;
  }
  return w;
}

std::string dump(const SocpProblem& p, const SocpSolution& s, const SolverOptions& opt) {
  std::ostringstream os;
  os.precision(17);
  os << "socp status " << to_string(s.status) << " after " << s.iterations << " iterations\n";
  if (opt.warm_start) os << "warm start [" << opt.warm_start->transpose() << "]\n";
  os << "cost [" << p.cost.transpose() << "]\n";
  for (std::size_t i = 0; i < p.cones.size(); ++i) {
    const auto& k = p.cones[i];
    os << "cone " << i << ": A=[" << k.a << "] b=[" << k.b.transpose() << "] c=[" << k.c.transpose()
       << "] d=" << k.d << "\n";
  }
  return os.str();
}

}  // namespace

FilterResult gp_cbf_socp(const VectorXd& u_ref, const ConstraintData& cd, const FilterConfig& cfg,
                         const std::optional<ClfData>& clf, const std::optional<VectorXd>& witness) {
  const int m = cd.input_dim();
  if (u_ref.size() != m) throw DimensionError("gp_cbf_socp: u_ref has wrong size");
  // A hair of tightening keeps the returned point on the safe side of the
  // cone after the interior-point tolerance.
  const double tighten = 1e-9 * std::max(1.0, std::abs(cd.drift()));
  auto build = [&](const Layout& lay) {
    SocpProblem p;
    p.cost = VectorXd::Zero(lay.size());
    p.cost(lay.t()) = 1.0;
    p.cones.push_back(epigraph(lay, u_ref));
    p.cones.push_back(chance(lay, cd.beta, cd.sqrt_g, cd.sqrt_f, cd.lg_hat, cd.drift() - tighten));
    if (lay.clf) add_clf(p, lay, *clf, cfg.clf);
    return p;
  };
  auto attempt = [&](const Layout& lay, const SocpProblem& p, SolverOptions& opt) {
    if (witness && cd.margin(*witness) > tighten) opt.warm_start = warm_point(lay, *witness, u_ref, p);
    SocpSolution sol = solve(p, opt);
    if (sol.status != SolveStatus::optimal && opt.warm_start) {
      // Far-away witnesses (u_safe scales like 1/|lambda|) can wreck the scaling.
      opt.warm_start.reset();
      sol = solve(p, opt);
    }
    return sol;
  };

  Layout lay{m, clf.has_value() && cfg.clf.enabled};
  SocpProblem p = build(lay);
  SolverOptions opt = cfg.solver;
  SocpSolution sol = attempt(lay, p, opt);
  if (sol.status != SolveStatus::optimal && lay.clf) {
    // Near-parabolic geometry pushes the optimum far out and the squared
    // epigraph variable with it; drop the soft CLF term and project instead.
    lay.clf = false;
    p = build(lay);
    opt = cfg.solver;
    sol = attempt(lay, p, opt);
  }
  if (sol.status != SolveStatus::optimal) {
    throw FilterFailure("gp_cbf_socp: pre-screened problem did not solve\n" + dump(p, sol, opt));
  }
  FilterResult r;
  r.u = sol.w.head(m);
  r.mode = FilterMode::socp;
  r.status = sol.status;
  if (lay.clf) r.relaxation = std::max(0.0, sol.w(lay.d()));
  r.slack = cd.margin(r.u);
  if (r.slack < 0.0 && witness && cd.margin(*witness) > 0.0) {
    // Pull back toward the interior witness.
    double lo = 0.0, hi = 1.0;
    for (int k = 0; k < 60; ++k) {
      const double mid = 0.5 * (lo + hi);
      if (cd.margin((1.0 - mid) * r.u + mid * *witness) >= 0.0) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    r.u = (1.0 - hi) * r.u + hi * *witness;
    r.slack = cd.margin(r.u);
  }
  return r;
}

VectorXd cbf_qp(const VectorXd& x, const VectorXd& u_ref, const Plant& model, double gamma_c, double margin) {
  const auto lie = lie_derivatives(model, x);
  const VectorXd a = lie.lg.transpose();
  const double b = lie.lf + gamma_c * model.barrier(x) - margin;
  const double val = a.dot(u_ref) + b;
  if (val >= 0.0) return u_ref;
  const double an = a.squaredNorm();
  if (an == 0.0) throw std::domain_error("cbf_qp: L_gB = 0 with violated constraint, QP infeasible");
  return u_ref - (val / an) * a;
}

FilterResult cbf_clf_qp(const VectorXd& x, const VectorXd& u_ref, const Plant& model, const FilterConfig& cfg) {
  FilterResult r;
  const auto lie = lie_derivatives(model, x);
  const double drift = lie.lf + cfg.gamma_c * model.barrier(x) - cfg.sample_margin;
  auto slack_at = [&](const VectorXd& u) { return lie.lg.dot(u) + drift; };
  if (!cfg.clf.enabled || !model.has_clf()) {
    r.u = cbf_qp(x, u_ref, model, cfg.gamma_c, cfg.sample_margin);
    r.slack = slack_at(r.u);
    return r;
  }
  const Layout lay{model.m, true};
  SocpProblem p;
  p.cost = VectorXd::Zero(lay.size());
  p.cost(lay.t()) = 1.0;
  p.cones.push_back(epigraph(lay, u_ref));
  const double tighten = 1e-9 * std::max(1.0, std::abs(drift));
  p.cones.push_back(chance(lay, 0.0, MatrixXd::Zero(model.m + 1, model.m), VectorXd::Zero(model.m + 1), lie.lg,
                           drift - tighten));
  add_clf(p, lay, clf_from_model(x, model), cfg.clf);
  const SocpSolution sol = solve(p, cfg.solver);
  r.status = sol.status;
  if (sol.status != SolveStatus::optimal) {
    // The CBF half-space alone is always solvable when L_gB != 0; fall back.
    r.u = cbf_qp(x, u_ref, model, cfg.gamma_c, cfg.sample_margin);
  } else {
    r.u = sol.w.head(model.m);
    r.relaxation = std::max(0.0, sol.w(lay.d()));
  }
  r.slack = slack_at(r.u);
  return r;
}

}  // namespace safecbf
