#pragma once

#include <random>
#include <string>

#include <Eigen/Dense>

#include "safecbf/feasibility.hpp"
#include "safecbf/gp_affine.hpp"

namespace testutil {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline std::string config_path(const std::string& name) { return std::string(SAFECBF_SOURCE_DIR) + "/configs/" + name; }

inline VectorXd gauss(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = nd(rng);
  return v;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline MatrixXd random_spd(std::mt19937_64& rng, int n, double floor = 0.1) {
  MatrixXd a(n, n);
  for (int i = 0; i < n; ++i) a.col(i) = gauss(rng, n);
  return a * a.transpose() + floor * MatrixXd::Identity(n, n);
}

/// m inputs over an n-dimensional state with mildly varied hyperparameters.
inline safecbf::KernelConfig random_kernel(std::mt19937_64& rng, int n, int m, double noise = 0.05) {
  safecbf::KernelConfig cfg;
  cfg.noise_std = noise;
  for (int i = 0; i <= m; ++i) {
    safecbf::SquaredExponential k;
    k.signal_variance = uniform(rng, 0.3, 2.0);
    k.length_scales = VectorXd::Constant(n, 1.0) + gauss(rng, n, 0.2).cwiseAbs();
    cfg.components.push_back(k);
  }
  return cfg;
}

/// Plain SE evaluation written out independently of the library.
inline double se(double sv, const VectorXd& ls, const VectorXd& a, const VectorXd& b) {
  double r2 = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) r2 += (a(i) - b(i)) * (a(i) - b(i)) / (ls(i) * ls(i));
  return sv * std::exp(-0.5 * r2);
}

}  // namespace testutil
