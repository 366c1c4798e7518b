#include "safecbf/cone_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "safecbf/gp_affine.hpp"

namespace safecbf {

double SocConstraint::margin(const VectorXd& w) const {
  const double rhs = c.dot(w) + d;
  if (a.rows() == 0) return rhs;
  return rhs - (a * w + b).norm();
}

void SocpProblem::validate() const {
  const auto n = cost.size();
  if (n == 0) throw DimensionError("socp: empty decision vector");
  if (cones.empty() && !lower && !upper) throw std::invalid_argument("socp: no constraints");
  for (std::size_t i = 0; i < cones.size(); ++i) {
    const auto& k = cones[i];
    if (k.c.size() != n || (k.a.rows() > 0 && k.a.cols() != n) || k.a.rows() != k.b.size()) {
      throw DimensionError("socp: cone " + std::to_string(i) + " has inconsistent dimensions");
    }
  }
  if (lower && lower->size() != n) throw DimensionError("socp: lower bound size");
  if (upper && upper->size() != n) throw DimensionError("socp: upper bound size");
  if (!cost.allFinite()) throw std::invalid_argument("socp: non-finite cost");
}

double SocpProblem::min_margin(const VectorXd& w) const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& k : cones) m = std::min(m, k.margin(w));
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (lower && std::isfinite((*lower)(i))) m = std::min(m, w(i) - (*lower)(i));
    if (upper && std::isfinite((*upper)(i))) m = std::min(m, (*upper)(i) - w(i));
  }
  return m;
}

std::string_view to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

namespace {

// One second-order cone block {(t, v) : t >= ||v||}; dimension 1 is the
// nonnegative half-line.
struct Block {
  Eigen::Index off;
  Eigen::Index dim;
};

struct Standard {
  MatrixXd g;
  VectorXd h;
  std::vector<Block> blocks;
};

Standard to_standard(const SocpProblem& p) {
  const auto n = p.cost.size();
  Eigen::Index rows = 0;
  for (const auto& k : p.cones) rows += k.a.rows() + 1;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (p.lower && std::isfinite((*p.lower)(i))) ++rows;
    if (p.upper && std::isfinite((*p.upper)(i))) ++rows;
  }
  Standard st;
  st.g = MatrixXd::Zero(rows, n);
  st.h = VectorXd::Zero(rows);
  Eigen::Index r = 0;
  for (const auto& k : p.cones) {
    const auto q = k.a.rows();
    st.g.row(r) = -k.c.transpose();
    st.h(r) = k.d;
    if (q > 0) {
      st.g.block(r + 1, 0, q, n) = -k.a;
      st.h.segment(r + 1, q) = k.b;
    }
    st.blocks.push_back({r, q + 1});
    r += q + 1;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (p.lower && std::isfinite((*p.lower)(i))) {
      st.g(r, i) = -1.0;
      st.h(r) = -(*p.lower)(i);
      st.blocks.push_back({r++, 1});
    }
    if (p.upper && std::isfinite((*p.upper)(i))) {
      st.g(r, i) = 1.0;
      st.h(r) = (*p.upper)(i);
      st.blocks.push_back({r++, 1});
    }
  }
  return st;
}

double jdet(const VectorXd& u) {  // u0^2 - ||u1||^2, factored to limit cancellation
  const double r = u.tail(u.size() - 1).norm();
  return (u(0) - r) * (u(0) + r);
}

// Distance-like interior measure of one block: u0 - ||u1||.
double interior(const VectorXd& u) { return u(0) - u.tail(u.size() - 1).norm(); }

VectorXd jprod(const VectorXd& u, const VectorXd& v) {
  VectorXd r(u.size());
  r(0) = u.dot(v);
  const auto k = u.size() - 1;
  if (k > 0) r.tail(k) = u(0) * v.tail(k) + v(0) * u.tail(k);
  return r;
}

// x with lam o x = r.
VectorXd jsolve(const VectorXd& lam, const VectorXd& r) {
  VectorXd x(lam.size());
  const auto k = lam.size() - 1;
  if (k == 0) {
    x(0) = r(0) / lam(0);
    return x;
  }
  const double det = jdet(lam);
  x(0) = (lam(0) * r(0) - lam.tail(k).dot(r.tail(k))) / det;
  x.tail(k) = (r.tail(k) - x(0) * lam.tail(k)) / lam(0);
  return x;
}

// Largest step a with u + a du in the cone (infinity if unbounded).
double max_step(const VectorXd& u, const VectorXd& du) {
  const auto k = u.size() - 1;
  const double inf = std::numeric_limits<double>::infinity();
  if (k == 0) return du(0) < 0.0 ? -u(0) / du(0) : inf;
  const double a = jdet(du);
  const double b = u(0) * du(0) - u.tail(k).dot(du.tail(k));
  const double c = std::max(jdet(u), 0.0);
  double best = inf;
  auto take = [&](double r) {
    if (r > 0.0) best = std::min(best, r);
  };
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  if (std::abs(a) <= 1e-14 * scale) {
    if (b < 0.0) take(-c / (2.0 * b));
  } else {
    const double disc = b * b - a * c;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      const double q = -(b + std::copysign(sq, b));
      if (q != 0.0) {
        take(q / a);
        take(c / q);
      } else {
        take(-b / a);
      }
    }
  }
  // The upper nappe is left when u0 + a du0 crosses zero, never before q hits 0,
  // but guard against rounding.
  if (du(0) < 0.0) best = std::min(best, -u(0) / du(0));
  return best;
}

// Nesterov-Todd scaling of one block: W symmetric with W z = W^{-1} s.
struct Scaling {
  MatrixXd w;
  MatrixXd winv;
};

Scaling nt_scaling(const VectorXd& s, const VectorXd& z) {
  const auto n = s.size();
  Scaling sc;
  if (n == 1) {
    const double eta = std::sqrt(s(0) / z(0));
    sc.w = MatrixXd::Constant(1, 1, eta);
    sc.winv = MatrixXd::Constant(1, 1, 1.0 / eta);
    return sc;
  }
  const double sn = std::sqrt(std::max(jdet(s), 1e-300));
  const double zn = std::sqrt(std::max(jdet(z), 1e-300));
  const VectorXd sb = s / sn;
  const VectorXd zb = z / zn;
  const double gam = std::sqrt(std::max((1.0 + sb.dot(zb)) / 2.0, 1e-300));
  VectorXd wb = sb;
  wb(0) += zb(0);
  wb.tail(n - 1) -= zb.tail(n - 1);
  wb /= 2.0 * gam;
  VectorXd v = wb;
  v(0) += 1.0;
  v /= std::sqrt(2.0 * (wb(0) + 1.0));
  const double eta = std::sqrt(sn / zn);
  MatrixXd j = MatrixXd::Identity(n, n);
  j.diagonal().tail(n - 1).setConstant(-1.0);
  sc.w = eta * (2.0 * v * v.transpose() - j);
  const VectorXd jv = j * v;
  sc.winv = (2.0 * jv * jv.transpose() - j) / eta;
  return sc;
}

// Moves u into the interior of the product cone: u + (1 + a) e when needed.
void push_interior(VectorXd& u, const std::vector<Block>& blocks) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& bl : blocks) {
    const VectorXd seg = u.segment(bl.off, bl.dim);
    const double t = bl.dim == 1 ? seg(0) : seg(0) - seg.tail(bl.dim - 1).norm();
    worst = std::max(worst, -t);
  }
  if (worst >= 0.0) {
    for (const auto& bl : blocks) u(bl.off) += 1.0 + worst;
  }
}

VectorXd solve_refined(const Eigen::FullPivLU<MatrixXd>& lu, const MatrixXd& k, const VectorXd& rhs) {
  VectorXd x = lu.solve(rhs);
  for (int it = 0; it < 3; ++it) {
    const VectorXd r = rhs - k * x;
    if (r.norm() <= 1e-15 * std::max(1.0, rhs.norm())) break;
    x += lu.solve(r);
  }
  return x;
}

}  // namespace

SocpSolution solve(const SocpProblem& p, const SolverOptions& opt) {
  p.validate();
  const Standard st = to_standard(p);
  const auto n = p.cost.size();
  const auto mrows = st.h.size();
  const MatrixXd& g = st.g;
  const VectorXd& h = st.h;
  const VectorXd& c = p.cost;
  const double nu = static_cast<double>(st.blocks.size());

  // Initial point: least squares primal, minimum-norm dual, shifted inside.
  MatrixXd k0 = MatrixXd::Zero(n + mrows, n + mrows);
  k0.topRightCorner(n, mrows) = g.transpose();
  k0.bottomLeftCorner(mrows, n) = g;
  k0.bottomRightCorner(mrows, mrows) = -MatrixXd::Identity(mrows, mrows);
  k0.topLeftCorner(n, n).diagonal().setConstant(-1e-12);
  Eigen::FullPivLU<MatrixXd> lu0(k0);
  VectorXd rhs0 = VectorXd::Zero(n + mrows);
  rhs0.tail(mrows) = h;
  VectorXd sol = solve_refined(lu0, k0, rhs0);
  VectorXd x = sol.head(n);
  VectorXd s = -sol.tail(mrows);
  rhs0.setZero();
  rhs0.head(n) = -c;
  sol = solve_refined(lu0, k0, rhs0);
  VectorXd z = sol.tail(mrows);
  if (opt.warm_start && opt.warm_start->size() == n) {
    const VectorXd sw = h - g * (*opt.warm_start);
    VectorXd probe = sw;
    push_interior(probe, st.blocks);
    if (probe == sw) {  // already interior
      x = *opt.warm_start;
      s = sw;
      // Centered dual: z = s^{-1} block by block, so s o z = e.
      for (const auto& bl : st.blocks) {
        VectorXd blk = s.segment(bl.off, bl.dim);
        const double det = bl.dim == 1 ? blk(0) * blk(0) : jdet(blk);
        blk.tail(bl.dim - 1) *= -1.0;
        z.segment(bl.off, bl.dim) = blk / det;
      }
    }
  }
  push_interior(s, st.blocks);
  push_interior(z, st.blocks);
  double tau = 1.0;
  double kappa = 1.0;

  const double hnorm = std::max(1.0, h.norm());
  const double cnorm = std::max(1.0, c.norm());

  SocpSolution out;
  auto finish = [&](SolveStatus status, int iters) {
    out.status = status;
    out.iterations = iters;
    if (status == SolveStatus::infeasible || status == SolveStatus::unbounded) {
      out.w = x;
      out.dual = z;
    } else {
      out.w = x / tau;
      out.dual = z / tau;
    }
    out.objective = c.dot(out.w);
    if (status != SolveStatus::infeasible && status != SolveStatus::unbounded) {
      out.primal_residual = (g * out.w + s / tau - h).norm() / hnorm;
      out.dual_residual = (g.transpose() * out.dual + c).norm() / cnorm;
      out.gap = s.dot(z) / (tau * tau);
    }
    return out;
  };

  // Best dehomogenized iterate so far, for a reduced-accuracy exit when the
  // complementarity collapses before the primal residual does.
  struct Best {
    double score = std::numeric_limits<double>::infinity();
    VectorXd x, s, z;
    double tau = 1.0;
    int iter = 0;
  } best;
  const double tol_inacc = 100.0 * opt.tol;
  int stall = 0;
  auto reduced_exit = [&](int iters) {
    if (best.score <= tol_inacc) {
      x = best.x;
      s = best.s;
      z = best.z;
      tau = best.tau;
      return finish(SolveStatus::optimal, iters);
    }
    return finish(SolveStatus::max_iter, iters);
  };

  const auto dim = n + mrows + 1;
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    const VectorXd rx = g.transpose() * z + c * tau;
    const VectorXd rz = g * x + s - h * tau;
    const double rt = kappa + c.dot(x) + h.dot(z);
    const double mu = (s.dot(z) + tau * kappa) / (nu + 1.0);

    // Convergence tests on the dehomogenized point.
    const double pres = rz.norm() / (tau * hnorm);
    const double dres = rx.norm() / (tau * cnorm);
    const double pobj = c.dot(x) / tau;
    const double dobj = -h.dot(z) / tau;
    const double gap = s.dot(z) / (tau * tau);
    const double relgap = gap / std::max(1.0, std::min(std::abs(pobj), std::abs(dobj)));
    if (pres <= opt.tol && dres <= opt.tol && (gap <= opt.tol || relgap <= opt.tol)) {
      return finish(SolveStatus::optimal, iter);
    }
    const double score = std::max({pres, dres, std::min(gap, relgap)});
    if (score < 0.5 * best.score) {
      stall = 0;
    } else if (++stall >= 8 && best.score <= tol_inacc) {
      return reduced_exit(iter);
    }
    if (score < best.score) best = {score, x, s, z, tau, iter};
    const double hz = h.dot(z);
    if (hz < 0.0 && (g.transpose() * z).norm() <= opt.tol * -hz) return finish(SolveStatus::infeasible, iter);
    const double cx = c.dot(x);
    if (cx < 0.0 && (g * x + s).norm() <= opt.tol * -cx) return finish(SolveStatus::unbounded, iter);

    // Scaling and scaled point lambda = W z.
    MatrixXd w = MatrixXd::Zero(mrows, mrows);
    MatrixXd winv = MatrixXd::Zero(mrows, mrows);
    VectorXd lam(mrows);
    for (const auto& bl : st.blocks) {
      const Scaling sc = nt_scaling(s.segment(bl.off, bl.dim), z.segment(bl.off, bl.dim));
      w.block(bl.off, bl.off, bl.dim, bl.dim) = sc.w;
      winv.block(bl.off, bl.off, bl.dim, bl.dim) = sc.winv;
      lam.segment(bl.off, bl.dim) = sc.w * z.segment(bl.off, bl.dim);
    }
    if (!lam.allFinite() || !w.allFinite()) return reduced_exit(iter);

    MatrixXd kk = MatrixXd::Zero(dim, dim);
    kk.block(0, n, n, mrows) = g.transpose();
    kk.block(0, n + mrows, n, 1) = c;
    kk.block(n, 0, mrows, n) = g;
    kk.block(n, n, mrows, mrows) = -w.transpose() * w;
    kk.block(n, n + mrows, mrows, 1) = -h;
    kk.block(n + mrows, 0, 1, n) = c.transpose();
    kk.block(n + mrows, n, 1, mrows) = h.transpose();
    kk(n + mrows, n + mrows) = -kappa / tau;
    Eigen::FullPivLU<MatrixXd> lu(kk);

    struct Dir {
      VectorXd dx, dz, ds;
      double dtau = 0.0, dkappa = 0.0;
    };
    auto direction = [&](double sigma, const VectorXd& corr, double corr_k) {
      // Complementarity target in scaled space, per block.
      VectorXd ds_t(mrows);
      for (const auto& bl : st.blocks) {
        const VectorXd lb = lam.segment(bl.off, bl.dim);
        VectorXd r = -jprod(lb, lb) - corr.segment(bl.off, bl.dim);
        r(0) += sigma * mu;
        ds_t.segment(bl.off, bl.dim) = jsolve(lb, r);
      }
      const double dk_t = -tau * kappa + sigma * mu - corr_k;
      VectorXd rhs(dim);
      rhs.head(n) = -(1.0 - sigma) * rx;
      rhs.segment(n, mrows) = -(1.0 - sigma) * rz - w.transpose() * ds_t;
      rhs(n + mrows) = -(1.0 - sigma) * rt - dk_t / tau;
      const VectorXd sol = solve_refined(lu, kk, rhs);
      Dir d;
      d.dx = sol.head(n);
      d.dz = sol.segment(n, mrows);
      d.dtau = sol(n + mrows);
      d.ds = w.transpose() * (ds_t - w * d.dz);
      d.dkappa = (dk_t - kappa * d.dtau) / tau;
      return d;
    };
    auto step_len = [&](const Dir& d) {
      double a = std::numeric_limits<double>::infinity();
      for (const auto& bl : st.blocks) {
        a = std::min(a, max_step(s.segment(bl.off, bl.dim), d.ds.segment(bl.off, bl.dim)));
        a = std::min(a, max_step(z.segment(bl.off, bl.dim), d.dz.segment(bl.off, bl.dim)));
      }
      if (d.dtau < 0.0) a = std::min(a, -tau / d.dtau);
      if (d.dkappa < 0.0) a = std::min(a, -kappa / d.dkappa);
      return a;
    };

    const Dir aff = direction(0.0, VectorXd::Zero(mrows), 0.0);
    const double a_aff = std::min(1.0, step_len(aff));
    const double sigma = std::pow(1.0 - a_aff, 3);
    // Mehrotra corrector: (W^{-T} ds_a) o (W dz_a).
    VectorXd corr(mrows);
    const VectorXd sa = winv.transpose() * aff.ds;
    const VectorXd za = w * aff.dz;
    for (const auto& bl : st.blocks) {
      corr.segment(bl.off, bl.dim) = jprod(sa.segment(bl.off, bl.dim), za.segment(bl.off, bl.dim));
    }
    const Dir d = direction(sigma, corr, aff.dtau * aff.dkappa);
    double a = std::min(1.0, 0.99 * step_len(d));
    if (!(a > 0.0) || !d.dx.allFinite() || !d.dz.allFinite() || !d.ds.allFinite()) return reduced_exit(iter);
    // Rounding in the boundary step can land on the cone; back off if so.
    auto inside = [&](double step) {
      for (const auto& bl : st.blocks) {
        if (!(interior(s.segment(bl.off, bl.dim) + step * d.ds.segment(bl.off, bl.dim)) > 0.0)) return false;
        if (!(interior(z.segment(bl.off, bl.dim) + step * d.dz.segment(bl.off, bl.dim)) > 0.0)) return false;
      }
      return tau + step * d.dtau > 0.0 && kappa + step * d.dkappa > 0.0;
    };
    int backoff = 0;
    while (!inside(a) && backoff < 30) {
      a *= 0.5;
      ++backoff;
    }
    if (backoff == 30) return reduced_exit(iter);

    x += a * d.dx;
    z += a * d.dz;
    s += a * d.ds;
    tau += a * d.dtau;
    kappa += a * d.dkappa;
  }
  return reduced_exit(opt.max_iter);
}

}  // namespace safecbf
