#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace safecbf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Squared-exponential kernel with ARD length scales over the state space.
struct SquaredExponential {
  double signal_variance = 1.0;
  VectorXd length_scales;

  double operator()(const VectorXd& a, const VectorXd& b) const;
};

/// Base kernels k_1..k_{m+1} of the affine dot product kernel plus the
/// measurement noise level. components[0] pairs with the constant 1 of the
/// augmented input, components[i] with u_i.
struct KernelConfig {
  std::vector<SquaredExponential> components;
  double noise_std = 1e-2;

  int state_dim() const;
  int input_dim() const { return static_cast<int>(components.size()) - 1; }
  /// Throws std::invalid_argument on non-positive hyperparameters or
  /// inconsistent length-scale dimensions.
  void validate() const;
};

/// Augmented input y = [1, u^T]^T.
VectorXd augment(const VectorXd& u);

/// k_c((x,y),(x',y')) = y^T Diag(k_1(x,x'),...,k_{m+1}(x,x')) y'.
double adp_kernel_eval(const VectorXd& x, const VectorXd& y, const VectorXd& xp, const VectorXd& yp,
                       const KernelConfig& cfg);

/// Symmetric PSD square root R (R = R^T, R^T R = S). Eigenvalues down to
/// -1e-12 (relative to the matrix scale) are clamped to zero.
MatrixXd sqrt_psd(const MatrixXd& s);

/// GP posterior at one state, in the affine/quadratic form
///   mu(u) = mean^T [1;u],  sigma^2(u) = [1 u^T] cov [1;u].
/// The nominal Lie-derivative fields are left at zero until with_nominal()
/// is called; the GP itself knows nothing about the plant.
struct PredictionBundle {
  VectorXd mean;      // m_B, size m+1
  MatrixXd cov;       // Sigma_B
  MatrixXd cov_sqrt;  // symmetric square root of Sigma_B

  double lf_hat = 0.0;
  Eigen::RowVectorXd lg_hat;

  int input_dim() const { return static_cast<int>(mean.size()) - 1; }
  /// First column of the square root: Sigma_LfB^{1/2}.
  VectorXd sqrt_f() const { return cov_sqrt.col(0); }
  /// Remaining columns: Sigma_LgB^{1/2}, (m+1) x m.
  MatrixXd sqrt_g() const { return cov_sqrt.rightCols(input_dim()); }
  MatrixXd sigma_g() const { return cov.bottomRightCorner(input_dim(), input_dim()); }
  double sigma_f() const { return cov(0, 0); }

  /// Adds the nominal Lie derivatives to the GP mean split.
  PredictionBundle& with_nominal(double lf_nominal, const Eigen::RowVectorXd& lg_nominal);
};

/// Growing dataset of ((x, u), z) triples with a maintained Cholesky factor of
/// K_c + sigma_n^2 I. Append-only.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(KernelConfig cfg);

  /// Appends one measurement; O(N^2) via a bordered Cholesky update. Falls back
  /// to a full refactorization when the new pivot drops below 1e-10.
  void add_measurement(const VectorXd& x, const VectorXd& u, double z);

  std::size_t size() const { return zs_.size(); }
  bool empty() const { return zs_.empty(); }
  const KernelConfig& kernel() const { return cfg_; }
  int state_dim() const { return cfg_.state_dim(); }
  int input_dim() const { return cfg_.input_dim(); }

  const std::vector<VectorXd>& states() const { return xs_; }
  const std::vector<VectorXd>& augmented_inputs() const { return ys_; }
  std::vector<VectorXd> inputs() const;
  const std::vector<double>& measurements() const { return zs_; }

  /// Lower Cholesky factor of K_c + sigma_n^2 I (N x N).
  MatrixXd factor() const { return chol_.topLeftCorner(size(), size()).triangularView<Eigen::Lower>(); }
  /// rhs <- L^{-1} rhs with L the lower Cholesky factor.
  void solve_lower_in_place(MatrixXd& rhs) const;
  /// Smallest diagonal entry of the factor (0 for an empty dataset).
  double min_pivot() const;
  /// (K_c + sigma_n^2 I)^{-1} z.
  const VectorXd& weights() const { return weights_; }
  /// Dense K_c + sigma_n^2 I rebuilt from the stored inputs.
  MatrixXd gram() const;

  /// Number of times the incremental update fell back to a full rebuild.
  std::size_t rebuild_count() const { return rebuilds_; }

  /// Discards the incremental factor and refactors from scratch.
  void refactorize();

  /// Same data, factored in one batch step. Used as an oracle in tests.
  static Dataset batch(KernelConfig cfg, const std::vector<VectorXd>& xs, const std::vector<VectorXd>& us,
                       const std::vector<double>& zs);

 private:
  void ensure_capacity(std::size_t n);
  void solve_weights();

  KernelConfig cfg_;
  std::vector<VectorXd> xs_;
  std::vector<VectorXd> ys_;
  std::vector<double> zs_;
  MatrixXd chol_;  // capacity-sized, lower triangle of the leading N x N block valid
  VectorXd weights_;
  std::size_t rebuilds_ = 0;
};

/// Posterior mean vector and covariance matrix at x_star.
PredictionBundle posterior_bundle(const VectorXd& x_star, const Dataset& data);

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

Prediction predict(const VectorXd& x_star, const VectorXd& u_star, const Dataset& data);

/// Evaluates the bundle's affine mean / quadratic variance at u.
Prediction evaluate_bundle(const PredictionBundle& b, const VectorXd& u);

struct BetaSchedule {
  enum class Mode { fixed, info_gain };
  Mode mode = Mode::fixed;
  double beta0 = 2.0;
  double eta = 1.0;        // RKHS norm bound
  double kappa = 0.01;     // information-gain surrogate, held constant in N
  double delta = 0.05;
};

/// Confidence multiplier after N measurements. Information-gain mode evaluates
/// sqrt(2 eta^2 + 300 kappa ln^3((N+1)/delta)).
double beta(std::size_t n, const BetaSchedule& sched);

}  // namespace safecbf
