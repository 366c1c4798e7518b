#include "safecbf/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "safecbf/gp_affine.hpp"
#include "safecbf/safety_filter.hpp"

namespace safecbf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Margin normalized by (1 + ||u||), evaluated straight from Sigma_B (no square root).
struct NormalizedMargin {
  const ConstraintData& cd;

  double at(const VectorXd& u) const {
    VectorXd y(u.size() + 1);
    y(0) = 1.0;
    y.tail(u.size()) = u;
    const double var = std::max(0.0, y.dot(cd.cov * y));
    return (linear_part(cd, u) - cd.beta * std::sqrt(var)) / (1.0 + u.norm());
  }
  // Limit along the unit direction d as ||u|| -> inf.
  double at_infinity(const VectorXd& d) const {
    const double var = std::max(0.0, d.dot(cd.sigma_g() * d));
    return cd.lg_hat.dot(d) - cd.beta * std::sqrt(var);
  }
  // rho in [0, 1] maps to radius rho / (1 - rho).
  double polar(double rho, const VectorXd& d) const {
    if (rho >= 1.0) return at_infinity(d);
    return at((rho / (1.0 - rho)) * d);
  }
};

VectorXd direction(int m, double theta) {
  VectorXd d(m);
  if (m == 1) {
    d(0) = theta < 0.0 ? -1.0 : 1.0;
  } else {
    d(0) = std::cos(theta);
    d(1) = std::sin(theta);
  }
  return d;
}

}  // namespace

bool h_check(const ConstraintData& cd, const VectorXd& u, double* quad, double* lin) {
  const double q = h_matrix(cd).quadratic(u);
  const double l = linear_part(cd, u);
  if (quad) *quad = q;
  if (lin) *lin = l;
  return q <= kHTol && l >= -kHTol;
}

double feasibility_oracle(const ConstraintData& cd) {
  const int m = cd.input_dim();
  if (m > 2) throw DimensionError("feasibility_oracle: m <= 2 only");
  const NormalizedMargin g{cd};
  const double pi = std::numbers::pi;
  double best = -std::numeric_limits<double>::infinity();
  double best_rho = 0.0, best_theta = 0.0;

  if (m == 1) {
    for (const double s : {-1.0, 1.0}) {
      const VectorXd d = direction(1, s);
      const int nr = 4000;
      for (int i = 0; i <= nr; ++i) {
        const double rho = static_cast<double>(i) / nr;
        const double v = g.polar(rho, d);
        if (v > best) {
          best = v;
          best_rho = rho;
          best_theta = s;
        }
      }
    }
    const VectorXd d = direction(1, best_theta);
    double w = 1.0 / 4000;
    for (int round = 0; round < 8; ++round) {
      const double c = best_rho;
      for (int i = -20; i <= 20; ++i) {
        const double rho = std::clamp(c + w * i / 20.0, 0.0, 1.0);
        const double v = g.polar(rho, d);
        if (v > best) {
          best = v;
          best_rho = rho;
        }
      }
      w /= 10.0;
    }
    return best;
  }

  const int nt = 720, nr = 500;
  for (int j = 0; j < nt; ++j) {
    const double theta = 2.0 * pi * j / nt;
    const VectorXd d = direction(2, theta);
    for (int i = 0; i <= nr; ++i) {
      const double rho = static_cast<double>(i) / nr;
      const double v = g.polar(rho, d);
      if (v > best) {
        best = v;
        best_rho = rho;
        best_theta = theta;
      }
    }
  }
  double wr = 1.0 / nr, wt = 2.0 * pi / nt;
  for (int round = 0; round < 8; ++round) {
    const double cr = best_rho, ct = best_theta;
    for (int j = -20; j <= 20; ++j) {
      const double theta = ct + wt * j / 20.0;
      const VectorXd d = direction(2, theta);
      for (int i = -20; i <= 20; ++i) {
        const double rho = std::clamp(cr + wr * i / 20.0, 0.0, 1.0);
        const double v = g.polar(rho, d);
        if (v > best) {
          best = v;
          best_rho = rho;
          best_theta = theta;
        }
      }
    }
    wr /= 10.0;
    wt /= 10.0;
  }
  return best;
}

ConstraintData random_constraint_data(std::mt19937_64& rng, int m) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double scale = std::exp(normal(rng) * 0.7) * 0.5;
  MatrixXd a(m + 1, m + 1);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = scale * normal(rng);
  MatrixXd cov = a * a.transpose();
  // Occasionally rank deficient.
  if (unit(rng) < 0.1) {
    const VectorXd v = a.col(0);
    cov = v * v.transpose();
  }
  Eigen::RowVectorXd lg(m);
  for (int i = 0; i < m; ++i) lg(i) = normal(rng);
  const double beta = 0.5 + 2.5 * unit(rng);
  const double lf = normal(rng);
  const double gamma_b = 3.0 * unit(rng) - 1.0;
  return ConstraintData::from_covariance(lf, lg, cov, gamma_b, beta);
}

VerifyReport verify_feasibility(const std::vector<ConstraintData>& instances) {
  const auto t0 = Clock::now();
  VerifyReport rep;
  rep.suite = "feasibility";
  std::ostringstream os;
  os << "index,m,beta,lambda_dagger,case,feasible,oracle_margin,excluded,agree,witness_quad,witness_linear,"
        "h_ok,eig_residual,h_indefinite_ok,socp_quad,socp_linear,socp_ok\n";
  int counts[4] = {0, 0, 0, 0};
  int h_failures = 0, eig_failures = 0, hi_failures = 0, socp_failures = 0, disagreements = 0;
  for (std::size_t k = 0; k < instances.size(); ++k) {
    const ConstraintData& cd = instances[k];
    const FeasibilityReport r = classify(cd);
    const double oracle = feasibility_oracle(cd);
    const bool excluded = std::abs(oracle) <= kOracleBand;
    const bool agree = excluded || (r.feasible == (oracle > 0.0));
    ++counts[static_cast<int>(r.kind())];

    const MatrixXd f = tradeoff_matrix(cd);
    const double eig_res = (f * r.direction - r.lambda * r.direction).norm();
    const bool eig_ok = eig_res <= 1e-8 * std::max(1.0, f.norm());

    double wq = 0.0, wl = 0.0;
    bool h_ok = true;
    if (r.witness) h_ok = h_check(cd, *r.witness, &wq, &wl);

    // Feasible => H has a nonpositive eigenvalue.
    bool h_indef = true;
    if (r.feasible) {
      const Eigen::SelfAdjointEigenSolver<MatrixXd> es(h_matrix(cd).h);
      h_indef = es.eigenvalues()(0) <= 1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    }

    // Filter solution for a random reference, checked the same way.
    double sq = 0.0, sl = 0.0;
    bool socp_ok = true;
    if (r.feasible && r.witness) {
      VectorXd u_ref = VectorXd::Zero(cd.input_dim());
      for (int i = 0; i < cd.input_dim(); ++i) u_ref(i) = std::sin(3.7 * (k + 1) + i);
      try {
        const FilterResult fr = gp_cbf_socp(u_ref, cd, FilterConfig{}, std::nullopt, r.witness);
        socp_ok = h_check(cd, fr.u, &sq, &sl);
      } catch (const FilterFailure&) {
        socp_ok = false;
      }
    }

    if (!excluded) ++rep.checked;
    disagreements += agree ? 0 : 1;
    h_failures += h_ok ? 0 : 1;
    eig_failures += eig_ok ? 0 : 1;
    hi_failures += h_indef ? 0 : 1;
    socp_failures += socp_ok ? 0 : 1;
    if (!agree || !h_ok || !eig_ok || !h_indef || !socp_ok) ++rep.failures;

    os << k << ',' << cd.input_dim() << ',' << fmt(cd.beta) << ',' << fmt(r.lambda) << ',' << to_string(r.kind())
       << ',' << r.feasible << ',' << fmt(oracle) << ',' << excluded << ',' << agree << ',' << fmt(wq) << ','
       << fmt(wl) << ',' << h_ok << ',' << fmt(eig_res) << ',' << h_indef << ',' << fmt(sq) << ',' << fmt(sl) << ','
       << socp_ok << '\n';
  }
  rep.instances = static_cast<int>(instances.size());
  rep.csv = os.str();
  rep.runtime = seconds_since(t0);
  rep.summary = {{"suite", rep.suite},
                 {"instances", rep.instances},
                 {"checked", rep.checked},
                 {"disagreements", disagreements},
                 {"h_failures", h_failures},
                 {"eigen_residual_failures", eig_failures},
                 {"h_indefinite_failures", hi_failures},
                 {"socp_failures", socp_failures},
                 {"hyperbolic", counts[0]},
                 {"elliptic", counts[1]},
                 {"parabolic", counts[2]},
                 {"infeasible", counts[3]},
                 {"failures", rep.failures},
                 {"runtime", rep.runtime}};
  return rep;
}

VerifyReport verify_feasibility(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ConstraintData> inst;
  inst.reserve(n);
  for (int k = 0; k < n; ++k) inst.push_back(random_constraint_data(rng, 1 + k % 2));
  return verify_feasibility(inst);
}

// ---------------------------------------------------------------- solver

SocpProblem random_socp(std::mt19937_64& rng, int dim, double box) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> ncones(1, 3), nrows(0, 3);
  SocpProblem p;
  p.cost.resize(dim);
  for (int i = 0; i < dim; ++i) p.cost(i) = normal(rng);
  // Interior point well inside the bounding ball.
  VectorXd w0(dim);
  for (int i = 0; i < dim; ++i) w0(i) = normal(rng);
  w0 *= 0.5 * box * unit(rng) / std::max(1.0, w0.norm());
  const int k = ncones(rng);
  for (int c = 0; c < k; ++c) {
    SocConstraint s;
    const int r = nrows(rng);
    s.a.resize(r, dim);
    s.b.resize(r);
    for (Eigen::Index i = 0; i < s.a.size(); ++i) s.a.data()[i] = normal(rng);
    for (int i = 0; i < r; ++i) s.b(i) = normal(rng);
    s.c.resize(dim);
    for (int i = 0; i < dim; ++i) s.c(i) = 0.5 * normal(rng);
    const double lhs = r > 0 ? (s.a * w0 + s.b).norm() : 0.0;
    s.d = lhs - s.c.dot(w0) + 0.05 + unit(rng);
    p.cones.push_back(std::move(s));
  }
  SocConstraint ball;
  ball.a = MatrixXd::Identity(dim, dim);
  ball.b = VectorXd::Zero(dim);
  ball.c = VectorXd::Zero(dim);
  ball.d = box;
  p.cones.push_back(std::move(ball));
  return p;
}

namespace {

// Primal log-barrier path following from a strictly feasible point.
VectorXd barrier_refine(const SocpProblem& p, VectorXd w) {
  const int n = p.dim();
  auto barrier = [&](const VectorXd& x, VectorXd* grad, MatrixXd* hess) {
    double phi = 0.0;
    if (grad) grad->setZero(n);
    if (hess) hess->setZero(n, n);
    for (const auto& k : p.cones) {
      const double t = k.c.dot(x) + k.d;
      if (k.a.rows() == 0) {
        if (!(t > 0.0)) return std::numeric_limits<double>::infinity();
        phi -= std::log(t);
        if (grad) *grad -= k.c / t;
        if (hess) *hess += k.c * k.c.transpose() / (t * t);
        continue;
      }
      const VectorXd r = k.a * x + k.b;
      const double q = t * t - r.squaredNorm();
      if (!(t > 0.0) || !(q > 0.0)) return std::numeric_limits<double>::infinity();
      phi -= std::log(q);
      const VectorXd dq = 2.0 * t * k.c - 2.0 * k.a.transpose() * r;
      if (grad) *grad -= dq / q;
      if (hess) {
        const MatrixXd d2q = 2.0 * k.c * k.c.transpose() - 2.0 * k.a.transpose() * k.a;
        *hess += dq * dq.transpose() / (q * q) - d2q / q;
      }
    }
    return phi;
  };
  double tt = 1.0;
  const double nu = 2.0 * static_cast<double>(p.cones.size());
  while (nu / tt > 1e-11) {
    for (int it = 0; it < 100; ++it) {
      VectorXd g;
      MatrixXd h;
      const double f0 = tt * p.cost.dot(w) + barrier(w, &g, &h);
      g += tt * p.cost;
      const VectorXd dx = -h.ldlt().solve(g);
      const double dec = -g.dot(dx);
      if (!(dec > 1e-14)) break;
      double s = 1.0;
      while (s > 1e-16) {
        const VectorXd wn = w + s * dx;
        const double f1 = tt * p.cost.dot(wn) + barrier(wn, nullptr, nullptr);
        if (std::isfinite(f1) && f1 <= f0 - 0.25 * s * dec) break;
        s *= 0.5;
      }
      if (s <= 1e-16) break;
      w += s * dx;
    }
    tt *= 8.0;
  }
  return w;
}

}  // namespace

double socp_oracle(const SocpProblem& p, double box, VectorXd* wout) {
  const int n = p.dim();
  const int res = n == 1 ? 20001 : (n == 2 ? 401 : 61);
  double best = std::numeric_limits<double>::infinity();
  VectorXd best_w;
  VectorXd w(n);
  std::vector<int> idx(n, 0);
  auto point = [&] {
    for (int i = 0; i < n; ++i) w(i) = -box + 2.0 * box * idx[i] / (res - 1);
  };
  for (;;) {
    point();
    if (p.min_margin(w) > 0.0) {
      const double v = p.cost.dot(w);
      if (v < best) {
        best = v;
        best_w = w;
      }
    }
    int i = 0;
    while (i < n && ++idx[i] == res) idx[i++] = 0;
    if (i == n) break;
  }
  if (!std::isfinite(best)) throw std::runtime_error("socp_oracle: no strictly feasible grid point");
  const VectorXd refined = barrier_refine(p, best_w);
  const double v = p.cost.dot(refined);
  if (v < best && p.min_margin(refined) >= -1e-12) {
    best = v;
    best_w = refined;
  }
  if (wout) *wout = best_w;
  return best;
}

VerifyReport verify_solver(int n, std::uint64_t seed) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(seed);
  VerifyReport rep;
  rep.suite = "solver";
  std::ostringstream os;
  os << "index,dim,cones,status,iterations,objective,oracle_objective,objective_gap,min_margin,ok\n";
  double worst_gap = 0.0, worst_violation = 0.0;
  constexpr double box = 3.0;
  for (int k = 0; k < n; ++k) {
    const int dim = 1 + k % 3;
    const SocpProblem p = random_socp(rng, dim, box);
    const SocpSolution s = solve(p);
    const double oracle = socp_oracle(p, box);
    const double gap = std::abs(s.objective - oracle);
    const double mm = s.status == SolveStatus::optimal ? p.min_margin(s.w) : -std::numeric_limits<double>::infinity();
    const bool ok = s.status == SolveStatus::optimal && gap <= kObjectiveTol && mm >= -kConstraintTol;
    if (s.status == SolveStatus::optimal) {
      worst_gap = std::max(worst_gap, gap);
      worst_violation = std::max(worst_violation, -mm);
    }
    rep.failures += ok ? 0 : 1;
    os << k << ',' << dim << ',' << p.cones.size() << ',' << to_string(s.status) << ',' << s.iterations << ','
       << fmt(s.objective) << ',' << fmt(oracle) << ',' << fmt(gap) << ',' << fmt(mm) << ',' << ok << '\n';
  }
  rep.instances = rep.checked = n;
  rep.csv = os.str();
  rep.runtime = seconds_since(t0);
  rep.summary = {{"suite", rep.suite},         {"instances", n},
                 {"failures", rep.failures},   {"max_objective_gap", worst_gap},
                 {"max_violation", worst_violation}, {"runtime", rep.runtime}};
  return rep;
}

// ---------------------------------------------------------------- gp

namespace {

struct DirectPosterior {
  const Dataset& d;
  MatrixXd gram;
  Eigen::LDLT<MatrixXd> ldlt;

  explicit DirectPosterior(const Dataset& data) : d(data), gram(data.gram()), ldlt(gram) {}

  Prediction at(const VectorXd& x, const VectorXd& u) const {
    const VectorXd y = augment(u);
    const auto n = d.size();
    VectorXd ks(n);
    for (std::size_t i = 0; i < n; ++i) ks(i) = adp_kernel_eval(x, y, d.states()[i], d.augmented_inputs()[i], d.kernel());
    VectorXd z(n);
    for (std::size_t i = 0; i < n; ++i) z(i) = d.measurements()[i];
    Prediction p;
    p.mean = ks.dot(ldlt.solve(z));
    p.variance = adp_kernel_eval(x, y, x, y, d.kernel()) - ks.dot(ldlt.solve(ks));
    return p;
  }
};

// Least-squares residual of fitting values on features, relative to the value scale.
double fit_residual(const MatrixXd& features, const VectorXd& values) {
  const VectorXd coef = features.colPivHouseholderQr().solve(values);
  return (features * coef - values).norm() / std::max(1.0, values.cwiseAbs().maxCoeff());
}

VectorXd quad_features(const VectorXd& u) {
  const auto m = u.size();
  VectorXd f(1 + m + m * (m + 1) / 2);
  f(0) = 1.0;
  f.segment(1, m) = u;
  int k = 1 + static_cast<int>(m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i; j < m; ++j) f(k++) = u(i) * u(j);
  return f;
}

}  // namespace

VerifyReport verify_gp(int n, std::uint64_t seed) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  VerifyReport rep;
  rep.suite = "gp";
  std::ostringstream os;
  os << "index,n,m,points,rebuilds,incremental_gap,direct_gap,affine_residual,quadratic_residual,ok\n";
  double worst_inc = 0.0, worst_direct = 0.0, worst_aff = 0.0, worst_quad = 0.0;
  constexpr int points = 30;
  for (int k = 0; k < n; ++k) {
    const int sn = 1 + k % 3;
    const int m = 1 + (k / 3) % 2;
    KernelConfig cfg;
    cfg.noise_std = 0.01 + 0.1 * unit(rng);
    for (int c = 0; c <= m; ++c) {
      SquaredExponential se;
      se.signal_variance = 0.1 + 2.0 * unit(rng);
      se.length_scales.resize(sn);
      for (int i = 0; i < sn; ++i) se.length_scales(i) = 0.3 + 2.0 * unit(rng);
      cfg.components.push_back(se);
    }
    Dataset inc(cfg);
    std::vector<VectorXd> xs, us;
    std::vector<double> zs;
    for (int i = 0; i < points; ++i) {
      VectorXd x(sn), u(m);
      for (int j = 0; j < sn; ++j) x(j) = normal(rng);
      for (int j = 0; j < m; ++j) u(j) = 2.0 * normal(rng);
      // Some near-repeats stress the bordered update.
      if (i > 0 && unit(rng) < 0.15) {
        x = xs.back();
        u = us.back();
      }
      const double z = std::sin(x.sum()) + 0.5 * u.sum() + 0.01 * normal(rng);
      inc.add_measurement(x, u, z);
      xs.push_back(x);
      us.push_back(u);
      zs.push_back(z);
    }
    const Dataset bat = Dataset::batch(cfg, xs, us, zs);
    const DirectPosterior direct(bat);

    double inc_gap = 0.0, dir_gap = 0.0, aff = 0.0, quad = 0.0;
    for (int t = 0; t < 3; ++t) {
      VectorXd xq(sn);
      for (int j = 0; j < sn; ++j) xq(j) = normal(rng);
      if (t == 0) xq = xs[k % points];
      const PredictionBundle bi = posterior_bundle(xq, inc);
      const PredictionBundle bb = posterior_bundle(xq, bat);
      const double ms = std::max(1.0, bb.mean.cwiseAbs().maxCoeff());
      const double cs = std::max(1.0, bb.cov.cwiseAbs().maxCoeff());
      inc_gap = std::max({inc_gap, (bi.mean - bb.mean).cwiseAbs().maxCoeff() / ms,
                          (bi.cov - bb.cov).cwiseAbs().maxCoeff() / cs});

      // Probe inputs: more than the number of free coefficients.
      const int nq = static_cast<int>(quad_features(VectorXd::Zero(m)).size()) + 2;
      MatrixXd fa(nq, m + 1), fq(nq, quad_features(VectorXd::Zero(m)).size());
      VectorXd mu(nq), var(nq);
      for (int q = 0; q < nq; ++q) {
        VectorXd u(m);
        for (int j = 0; j < m; ++j) u(j) = 3.0 * normal(rng);
        const Prediction pd = direct.at(xq, u);
        const Prediction pb = evaluate_bundle(bb, u);
        dir_gap = std::max({dir_gap, std::abs(pd.mean - pb.mean) / std::max(1.0, std::abs(pd.mean)),
                            std::abs(pd.variance - pb.variance) / std::max(1.0, std::abs(pd.variance))});
        fa.row(q) = augment(u).transpose();
        fq.row(q) = quad_features(u).transpose();
        mu(q) = pd.mean;
        var(q) = pd.variance;
      }
      aff = std::max(aff, fit_residual(fa, mu));
      quad = std::max(quad, fit_residual(fq, var));
    }
    const bool ok = inc_gap <= kGpTol && dir_gap <= kGpTol && aff <= kStructureTol && quad <= kStructureTol;
    rep.failures += ok ? 0 : 1;
    worst_inc = std::max(worst_inc, inc_gap);
    worst_direct = std::max(worst_direct, dir_gap);
    worst_aff = std::max(worst_aff, aff);
    worst_quad = std::max(worst_quad, quad);
    os << k << ',' << sn << ',' << m << ',' << points << ',' << inc.rebuild_count() << ',' << fmt(inc_gap) << ','
       << fmt(dir_gap) << ',' << fmt(aff) << ',' << fmt(quad) << ',' << ok << '\n';
  }
  rep.instances = rep.checked = n;
  rep.csv = os.str();
  rep.runtime = seconds_since(t0);
  rep.summary = {{"suite", rep.suite},
                 {"instances", n},
                 {"failures", rep.failures},
                 {"max_incremental_gap", worst_inc},
                 {"max_direct_gap", worst_direct},
                 {"max_affine_residual", worst_aff},
                 {"max_quadratic_residual", worst_quad},
                 {"runtime", rep.runtime}};
  return rep;
}

VerifyReport verify(std::string_view suite, int n, std::uint64_t seed) {
  if (suite == "feasibility") return verify_feasibility(n, seed);
  if (suite == "solver") return verify_solver(n, seed);
  if (suite == "gp") return verify_gp(n, seed);
  throw std::invalid_argument("verify: unknown suite '" + std::string(suite) + "' (feasibility | solver | gp)");
}

std::vector<ConstraintData> constraint_data_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("constraint data: expected a JSON array");
  std::vector<ConstraintData> out;
  for (const auto& e : j) {
    const auto lg = e.at("lg_hat").get<std::vector<double>>();
    const auto rows = e.at("cov").get<std::vector<std::vector<double>>>();
    const auto m = static_cast<Eigen::Index>(lg.size());
    if (static_cast<Eigen::Index>(rows.size()) != m + 1) throw DimensionError("constraint data: cov must be (m+1)x(m+1)");
    MatrixXd cov(m + 1, m + 1);
    for (Eigen::Index i = 0; i <= m; ++i) {
      if (static_cast<Eigen::Index>(rows[i].size()) != m + 1) throw DimensionError("constraint data: cov row size");
      for (Eigen::Index c = 0; c <= m; ++c) cov(i, c) = rows[i][c];
    }
    out.push_back(ConstraintData::from_covariance(e.at("lf_hat").get<double>(),
                                                  Eigen::Map<const Eigen::RowVectorXd>(lg.data(), m), cov,
                                                  e.value("gamma_b", 0.0), e.value("beta", 2.0)));
  }
  return out;
}

nlohmann::json to_json(const ConstraintData& cd) {
  nlohmann::json j;
  j["lf_hat"] = cd.lf_hat;
  j["lg_hat"] = std::vector<double>(cd.lg_hat.data(), cd.lg_hat.data() + cd.lg_hat.size());
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < cd.cov.rows(); ++i) {
    rows.emplace_back();
    for (Eigen::Index c = 0; c < cd.cov.cols(); ++c) rows.back().push_back(cd.cov(i, c));
  }
  j["cov"] = rows;
  j["gamma_b"] = cd.gamma_b;
  j["beta"] = cd.beta;
  return j;
}

}  // namespace safecbf
