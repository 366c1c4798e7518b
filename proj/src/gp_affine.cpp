#include "safecbf/gp_affine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace safecbf {

double SquaredExponential::operator()(const VectorXd& a, const VectorXd& b) const {
  const double r2 = ((a - b).array() / length_scales.array()).square().sum();
  return signal_variance * std::exp(-0.5 * r2);
}

int KernelConfig::state_dim() const {
  return components.empty() ? 0 : static_cast<int>(components.front().length_scales.size());
}

void KernelConfig::validate() const {
  if (components.size() < 2) {
    throw std::invalid_argument("kernel config needs at least two components (drift + one input)");
  }
  if (!(noise_std > 0.0)) throw std::invalid_argument("kernel noise_std must be > 0");
  const auto n = components.front().length_scales.size();
  for (std::size_t i = 0; i < components.size(); ++i) {
    const auto& k = components[i];
    if (!(k.signal_variance > 0.0)) {
      throw std::invalid_argument("kernel component " + std::to_string(i) + ": signal_variance must be > 0");
    }
    if (k.length_scales.size() != n || n == 0) {
      throw std::invalid_argument("kernel component " + std::to_string(i) + ": length_scales dimension mismatch");
    }
    if ((k.length_scales.array() <= 0.0).any()) {
      throw std::invalid_argument("kernel component " + std::to_string(i) + ": length scales must be > 0");
    }
  }
}

VectorXd augment(const VectorXd& u) {
  VectorXd y(u.size() + 1);
  y(0) = 1.0;
  y.tail(u.size()) = u;
  return y;
}

double adp_kernel_eval(const VectorXd& x, const VectorXd& y, const VectorXd& xp, const VectorXd& yp,
                       const KernelConfig& cfg) {
  const auto p = static_cast<Eigen::Index>(cfg.components.size());
  if (y.size() != p || yp.size() != p) throw DimensionError("adp kernel: augmented input has wrong size");
  if (x.size() != cfg.state_dim() || xp.size() != cfg.state_dim()) {
    throw DimensionError("adp kernel: state has wrong size");
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (y(i) == 0.0 || yp(i) == 0.0) continue;
    acc += y(i) * cfg.components[i](x, xp) * yp(i);
  }
  return acc;
}

MatrixXd sqrt_psd(const MatrixXd& s) {
  if (s.rows() != s.cols()) throw DimensionError("sqrt_psd: matrix not square");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::invalid_argument("sqrt_psd: matrix is not symmetric");
  }
  const MatrixXd sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  VectorXd ev = es.eigenvalues();
  if (ev.minCoeff() < -1e-12 * scale) {
    std::ostringstream os;
    os << "sqrt_psd: matrix is indefinite (min eigenvalue " << ev.minCoeff() << ")";
    throw std::invalid_argument(os.str());
  }
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  MatrixXd r = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (r + r.transpose());
}

PredictionBundle& PredictionBundle::with_nominal(double lf_nominal, const Eigen::RowVectorXd& lg_nominal) {
  if (lg_nominal.size() != input_dim()) throw DimensionError("with_nominal: L_gB has wrong size");
  lf_hat = lf_nominal + mean(0);
  lg_hat = lg_nominal + mean.tail(input_dim()).transpose();
  return *this;
}

// ---------------------------------------------------------------- Dataset

Dataset::Dataset(KernelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::vector<VectorXd> Dataset::inputs() const {
  std::vector<VectorXd> out;
  out.reserve(ys_.size());
  for (const auto& y : ys_) out.push_back(y.tail(y.size() - 1));
  return out;
}

void Dataset::ensure_capacity(std::size_t n) {
  if (static_cast<std::size_t>(chol_.rows()) >= n) return;
  std::size_t cap = std::max<std::size_t>(16, static_cast<std::size_t>(chol_.rows()));
  while (cap < n) cap *= 2;
  MatrixXd grown = MatrixXd::Zero(cap, cap);
  // batch() fills the point lists before the first factorization.
  const auto old = std::min(static_cast<Eigen::Index>(size()), chol_.rows());
  if (old > 0) grown.topLeftCorner(old, old) = chol_.topLeftCorner(old, old);
  chol_.swap(grown);
}

MatrixXd Dataset::gram() const {
  const auto n = static_cast<Eigen::Index>(size());
  MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      k(i, j) = adp_kernel_eval(xs_[i], ys_[i], xs_[j], ys_[j], cfg_);
      k(j, i) = k(i, j);
    }
  }
  k.diagonal().array() += cfg_.noise_std * cfg_.noise_std;
  return k;
}

void Dataset::refactorize() {
  const auto n = static_cast<Eigen::Index>(size());
  ensure_capacity(size());
  if (n == 0) {
    weights_.resize(0);
    return;
  }
  Eigen::LLT<MatrixXd> llt(gram());
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("dataset: Gram matrix is not positive definite (corrupted dataset)");
  }
  chol_.topLeftCorner(n, n) = llt.matrixL();
  solve_weights();
}

void Dataset::solve_weights() {
  const auto n = static_cast<Eigen::Index>(size());
  const VectorXd z = Eigen::Map<const VectorXd>(zs_.data(), n);
  const auto l = chol_.topLeftCorner(n, n).triangularView<Eigen::Lower>();
  weights_ = l.solve(z);
  l.transpose().solveInPlace(weights_);
}

void Dataset::add_measurement(const VectorXd& x, const VectorXd& u, double z) {
  if (x.size() != state_dim()) throw DimensionError("add_measurement: state has wrong size");
  if (u.size() != input_dim()) throw DimensionError("add_measurement: input has wrong size");
  if (!x.allFinite() || !u.allFinite() || !std::isfinite(z)) {
    throw std::invalid_argument("add_measurement: non-finite data");
  }
  const VectorXd y = augment(u);
  const auto n = static_cast<Eigen::Index>(size());
  ensure_capacity(size() + 1);

  VectorXd k(n);
  for (Eigen::Index j = 0; j < n; ++j) k(j) = adp_kernel_eval(x, y, xs_[j], ys_[j], cfg_);
  const double kss = adp_kernel_eval(x, y, x, y, cfg_) + cfg_.noise_std * cfg_.noise_std;

  xs_.push_back(x);
  ys_.push_back(y);
  zs_.push_back(z);

  VectorXd l = k;
  if (n > 0) chol_.topLeftCorner(n, n).triangularView<Eigen::Lower>().solveInPlace(l);
  const double pivot = kss - l.squaredNorm();
  if (pivot < 1e-10) {
    ++rebuilds_;
    refactorize();
    return;
  }
  chol_.block(n, 0, 1, n) = l.transpose();
  chol_(n, n) = std::sqrt(pivot);
  solve_weights();
}

void Dataset::solve_lower_in_place(MatrixXd& rhs) const {
  const auto n = static_cast<Eigen::Index>(size());
  if (rhs.rows() != n) throw DimensionError("solve_lower_in_place: row count mismatch");
  if (n == 0) return;
  chol_.topLeftCorner(n, n).triangularView<Eigen::Lower>().solveInPlace(rhs);
}

double Dataset::min_pivot() const {
  const auto n = static_cast<Eigen::Index>(size());
  return n == 0 ? 0.0 : chol_.topLeftCorner(n, n).diagonal().minCoeff();
}

Dataset Dataset::batch(KernelConfig cfg, const std::vector<VectorXd>& xs, const std::vector<VectorXd>& us,
                       const std::vector<double>& zs) {
  if (xs.size() != us.size() || xs.size() != zs.size()) throw DimensionError("batch: length mismatch");
  Dataset d(std::move(cfg));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].size() != d.state_dim() || us[i].size() != d.input_dim()) {
      throw DimensionError("batch: element has wrong size");
    }
    d.xs_.push_back(xs[i]);
    d.ys_.push_back(augment(us[i]));
    d.zs_.push_back(zs[i]);
  }
  d.refactorize();
  return d;
}

// ---------------------------------------------------------------- posterior

PredictionBundle posterior_bundle(const VectorXd& x_star, const Dataset& data) {
  const auto& cfg = data.kernel();
  if (x_star.size() != cfg.state_dim()) throw DimensionError("posterior_bundle: state has wrong size");
  const auto p = static_cast<Eigen::Index>(cfg.components.size());
  const auto n = static_cast<Eigen::Index>(data.size());

  PredictionBundle b;
  b.cov = MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) b.cov(i, i) = cfg.components[i](x_star, x_star);
  b.mean = VectorXd::Zero(p);

  if (n > 0) {
    // K_{*Y}: row i holds k_i(x*, x_j) * Y_ij.
    MatrixXd kstar(p, n);
    const auto& xs = data.states();
    const auto& ys = data.augmented_inputs();
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < p; ++i) {
        const double yij = ys[j](i);
        kstar(i, j) = (yij == 0.0) ? 0.0 : cfg.components[i](x_star, xs[j]) * yij;
      }
    }
    b.mean = kstar * data.weights();
    if (!(data.min_pivot() > 0.0)) throw std::runtime_error("posterior_bundle: singular factorization");
    MatrixXd v = kstar.transpose();
    data.solve_lower_in_place(v);
    b.cov.noalias() -= v.transpose() * v;
    b.cov = 0.5 * (b.cov + b.cov.transpose());
  }
  b.cov_sqrt = sqrt_psd(b.cov);
  b.lg_hat = Eigen::RowVectorXd::Zero(p - 1);
  return b;
}

Prediction evaluate_bundle(const PredictionBundle& b, const VectorXd& u) {
  if (u.size() != b.input_dim()) throw DimensionError("evaluate_bundle: input has wrong size");
  const VectorXd y = augment(u);
  return {b.mean.dot(y), std::max(0.0, y.dot(b.cov * y))};
}

Prediction predict(const VectorXd& x_star, const VectorXd& u_star, const Dataset& data) {
  return evaluate_bundle(posterior_bundle(x_star, data), u_star);
}

double beta(std::size_t n, const BetaSchedule& sched) {
  switch (sched.mode) {
    case BetaSchedule::Mode::fixed:
      if (!(sched.beta0 > 0.0)) throw std::invalid_argument("beta: fixed value must be > 0");
      return sched.beta0;
    case BetaSchedule::Mode::info_gain: {
      if (!(sched.delta > 0.0 && sched.delta < 1.0)) throw std::invalid_argument("beta: delta must lie in (0,1)");
      const double lg = std::log((static_cast<double>(n) + 1.0) / sched.delta);
      return std::sqrt(2.0 * sched.eta * sched.eta + 300.0 * sched.kappa * lg * lg * lg);
    }
  }
  throw std::logic_error("beta: unknown mode");
}

}  // namespace safecbf
