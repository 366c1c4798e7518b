#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "safecbf/config_file.hpp"
#include "safecbf/feasibility.hpp"
#include "safecbf/gp_affine.hpp"
#include "safecbf/plants.hpp"
#include "safecbf/safety_filter.hpp"

namespace safecbf {

struct LearnerConfig {
  std::optional<double> epsilon;  // empty: 0.05 |lambda(x0 | D0)|, floored at 1e-3
  double tau = 0.5;               // time-trigger period [s]
  double t_max = 50.0;
  double dt_ctrl = 1e-2;
  double dt_sim = 1e-3;
  AlphaPolicy alpha{1.5, 0.0};
  double escalation = 2.0;
  int max_retries = 8;
  double noise = 0.01;            // measurement noise half-width
  std::string prior_dataset;      // used by alg1_prior

  int steps() const;
  int tau_steps() const;
  int substeps() const;
  void validate() const;
};

/// 2-D slice of the state space for lambda maps; other coordinates are held
/// at `base`.
struct LambdaGrid {
  int ix = 0;
  int iy = 1;
  double x_lo = 0.0, x_hi = 1.0;
  double y_lo = 0.0, y_hi = 1.0;
  int nx = 41, ny = 41;
  VectorXd base;
};

/// Settings for the prior-dataset generator (alg1_prior).
struct WarmupConfig {
  int points = 20;
  VectorXd spread;          // half-width of the uniform box around x0, per state
  double alpha_scale = 1.0; // multiplies the u_safe magnitude
};

struct Scenario {
  std::string plant;  // "acc" or "vehicle4d"
  Plant truth;
  Plant nominal;
  VectorXd x0;
  std::function<VectorXd(const VectorXd&, double)> reference;
  KernelConfig kernel_b;
  std::optional<KernelConfig> kernel_v;  // CLF mismatch GP
  FilterConfig filter;
  LearnerConfig learner;
  LambdaGrid grid;
  WarmupConfig warmup;
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
  std::string source;  // config path, for resolving relative paths
  std::uint64_t config_hash = 0;

  /// Prior dataset path resolved against the config location.
  std::string prior_path() const;
};

/// FNV-1a over the bytes.
std::uint64_t fnv1a(const std::string& bytes);

Scenario load_scenario(const std::string& path);
Scenario scenario_from_config(const ConfigFile& cf);

const std::vector<std::string>& known_variants();

}  // namespace safecbf
