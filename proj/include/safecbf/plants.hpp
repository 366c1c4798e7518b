#pragma once

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace safecbf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Control-affine plant x' = f(x) + g(x) u with a CBF (and optionally a CLF).
struct Plant {
  std::string label;
  int n = 0;
  int m = 0;
  std::function<VectorXd(const VectorXd&)> f;
  std::function<MatrixXd(const VectorXd&)> g;
  std::function<double(const VectorXd&)> barrier;
  std::function<VectorXd(const VectorXd&)> barrier_grad;
  std::function<double(const VectorXd&)> clf;       // optional
  std::function<VectorXd(const VectorXd&)> clf_grad; // optional
  std::optional<VectorXd> u_lower;
  std::optional<VectorXd> u_upper;

  VectorXd dynamics(const VectorXd& x, const VectorXd& u) const { return f(x) + g(x) * u; }
  bool has_clf() const { return static_cast<bool>(clf); }
};

struct LieDerivatives {
  double lf = 0.0;
  Eigen::RowVectorXd lg;
};

/// L_fB = grad B . f, L_gB = grad B . g.
LieDerivatives lie_derivatives(const Plant& pl, const VectorXd& x);
/// Same for the CLF. Throws if the plant has none.
LieDerivatives clf_lie_derivatives(const Plant& pl, const VectorXd& x);

/// (L_fB - L_f~B)(x) + (L_gB - L_g~B)(x) u.
double delta_b(const Plant& truth, const Plant& nominal, const VectorXd& x, const VectorXd& u);
/// Same mismatch for the CLF derivative.
double delta_v(const Plant& truth, const Plant& nominal, const VectorXd& x, const VectorXd& u);

/// delta_b plus noise uniform on [-sigma_n, sigma_n].
double measure(const Plant& truth, const Plant& nominal, const VectorXd& x, const VectorXd& u, std::mt19937_64& rng,
               double sigma_n);

using Dynamics = std::function<VectorXd(const VectorXd&, const VectorXd&)>;

struct NonFiniteState : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One classical RK4 step with u held constant.
VectorXd integrate_step(const Dynamics& dyn, const VectorXd& x, const VectorXd& u, double dt);

// ---------------------------------------------------------------- ACC

struct AccParams {
  double mass = 1650.0;  // kg
  double f0 = 0.1;
  double f1 = 5.0;
  double f2 = 0.25;
  double v0 = 14.0;  // front car
  double vd = 24.0;
  double headway = 1.8;
  double input_scale = 1000.0;  // u is in kN

  double rolling(double v) const { return f0 + f1 * v + f2 * v * v; }
  void validate() const;
};

/// State (v, z), input u (scaled wheel force). B = z - headway v, V = (v - vd)^2.
Plant make_acc(const AccParams& p, std::string label = "acc");

// ---------------------------------------------------------------- vehicle

struct VehicleParams {
  double k_v = 1.0;
  double k_w = 1.0;
  double k_a = 1.0;
  double mu = 0.0;
  double s_e = 0.0;
  double slope_exponent = 0.1;  // h = (px^2 + py^2)^exponent
  double r_obs = 3.0;
  double v_min = 1.0;
  double v_max = 5.0;
  double v_d = 3.0;
  double w_max = 2.0;
  double a_max = 1.0;
  double tau_m = 0.5;
  std::vector<Eigen::Vector2d> targets{{5, 5}, {5, -5}, {-5, -5}, {-5, 5}};
  double period = 2.5;
  double k_heading = 2.0;
  double k_speed = 1.0;

  double d_steer() const;
  double margin(double v) const { return tau_m * (v - v_min) + d_steer(); }
  void validate() const;
};

/// True-model coefficients (skid, drag, slope).
VehicleParams vehicle_true_params();

struct BarrierValue {
  double value = 0.0;
  VectorXd grad;
};

/// Heading-shifted obstacle CBF with its analytic gradient.
BarrierValue vehicle_cbf(const VectorXd& x, const VehicleParams& p);

/// State (px, py, theta, v), input (w, a).
Plant make_vehicle(const VehicleParams& p, std::string label = "vehicle4d");

/// Angle in (-pi, pi].
double wrap_angle(double a);

/// Target pursuit plus speed regulation, clipped to the input box.
VectorXd vehicle_reference(const VectorXd& x, double t, const VehicleParams& p);

}  // namespace safecbf
