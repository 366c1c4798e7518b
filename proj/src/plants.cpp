#include "safecbf/plants.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "safecbf/gp_affine.hpp"

namespace safecbf {

LieDerivatives lie_derivatives(const Plant& pl, const VectorXd& x) {
  const VectorXd grad = pl.barrier_grad(x);
  return {grad.dot(pl.f(x)), grad.transpose() * pl.g(x)};
}

LieDerivatives clf_lie_derivatives(const Plant& pl, const VectorXd& x) {
  if (!pl.has_clf()) throw std::logic_error("plant " + pl.label + " has no CLF");
  const VectorXd grad = pl.clf_grad(x);
  return {grad.dot(pl.f(x)), grad.transpose() * pl.g(x)};
}

namespace {
void check_pair(const Plant& a, const Plant& b) {
  if (a.n != b.n || a.m != b.m) throw DimensionError("plant pair: dimensions differ");
}
}  // namespace

double delta_b(const Plant& truth, const Plant& nominal, const VectorXd& x, const VectorXd& u) {
  check_pair(truth, nominal);
  if (u.size() != truth.m) throw DimensionError("delta_b: input has wrong size");
  // Both plants must carry the same B; compare values as a cheap guard.
  const double bt = truth.barrier(x);
  const double bn = nominal.barrier(x);
  if (std::abs(bt - bn) > 1e-12 * std::max(1.0, std::abs(bt))) {
    throw std::invalid_argument("delta_b: plants use different barrier functions");
  }
  const auto lt = lie_derivatives(truth, x);
  const auto ln = lie_derivatives(nominal, x);
  return (lt.lf - ln.lf) + (lt.lg - ln.lg).dot(u);
}

double delta_v(const Plant& truth, const Plant& nominal, const VectorXd& x, const VectorXd& u) {
  check_pair(truth, nominal);
  const auto lt = clf_lie_derivatives(truth, x);
  const auto ln = clf_lie_derivatives(nominal, x);
  return (lt.lf - ln.lf) + (lt.lg - ln.lg).dot(u);
}

double measure(const Plant& truth, const Plant& nominal, const VectorXd& x, const VectorXd& u, std::mt19937_64& rng,
               double sigma_n) {
  if (sigma_n < 0.0) throw std::invalid_argument("measure: sigma_n must be >= 0");
  const double exact = delta_b(truth, nominal, x, u);
  if (sigma_n == 0.0) return exact;
  std::uniform_real_distribution<double> noise(-sigma_n, sigma_n);
  return exact + noise(rng);
}

VectorXd integrate_step(const Dynamics& dyn, const VectorXd& x, const VectorXd& u, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_step: dt must be > 0");
  const VectorXd k1 = dyn(x, u);
  const VectorXd k2 = dyn(x + 0.5 * dt * k1, u);
  const VectorXd k3 = dyn(x + 0.5 * dt * k2, u);
  const VectorXd k4 = dyn(x + dt * k3, u);
  VectorXd out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!out.allFinite()) {
    std::ostringstream os;
    os << "integrate_step: non-finite state from x = [" << x.transpose() << "], u = [" << u.transpose() << "]";
    throw NonFiniteState(os.str());
  }
  return out;
}

// ---------------------------------------------------------------- ACC

void AccParams::validate() const {
  if (!(mass > 0.0)) throw std::invalid_argument("acc: mass must be > 0");
  if (!(v0 > 0.0) || !(vd > 0.0)) throw std::invalid_argument("acc: v0 and vd must be > 0");
  if (!(input_scale > 0.0)) throw std::invalid_argument("acc: input_scale must be > 0");
}

Plant make_acc(const AccParams& p, std::string label) {
  p.validate();
  Plant pl;
  pl.label = std::move(label);
  pl.n = 2;
  pl.m = 1;
  pl.f = [p](const VectorXd& x) {
    VectorXd r(2);
    r << -p.rolling(x(0)) / p.mass, p.v0 - x(0);
    return r;
  };
  pl.g = [p](const VectorXd&) {
    MatrixXd r(2, 1);
    r << p.input_scale / p.mass, 0.0;
    return r;
  };
  pl.barrier = [p](const VectorXd& x) { return x(1) - p.headway * x(0); };
  pl.barrier_grad = [p](const VectorXd&) {
    VectorXd r(2);
    r << -p.headway, 1.0;
    return r;
  };
  pl.clf = [p](const VectorXd& x) { return (x(0) - p.vd) * (x(0) - p.vd); };
  pl.clf_grad = [p](const VectorXd& x) {
    VectorXd r(2);
    r << 2.0 * (x(0) - p.vd), 0.0;
    return r;
  };
  return pl;
}

// ---------------------------------------------------------------- vehicle

double VehicleParams::d_steer() const { return r_obs * std::sqrt(1.0 + 2.0 * v_max / (r_obs * w_max)) - r_obs; }

void VehicleParams::validate() const {
  if (!(r_obs > 0.0)) throw std::invalid_argument("vehicle: r_obs must be > 0");
  if (!(v_min < v_max)) throw std::invalid_argument("vehicle: v_min must be < v_max");
  if (!(w_max > 0.0) || !(a_max > 0.0)) throw std::invalid_argument("vehicle: input bounds must be > 0");
  if (!(period > 0.0) || targets.empty()) throw std::invalid_argument("vehicle: need targets and a period > 0");
}

VehicleParams vehicle_true_params() {
  VehicleParams p;
  p.k_v = 2.0;
  p.k_w = 1.5;
  p.k_a = 1.0;
  p.mu = 0.5;
  p.s_e = 0.5;
  return p;
}

BarrierValue vehicle_cbf(const VectorXd& x, const VehicleParams& p) {
  const double th = x(2);
  const double half = 0.5 * p.margin(x(3));
  const double c = std::cos(th);
  const double s = std::sin(th);
  const double px = x(0) + half * c;
  const double py = x(1) + half * s;
  const double r = std::hypot(px, py);
  if (!(r > 0.0)) throw std::domain_error("vehicle_cbf: gradient undefined at the shifted origin");
  BarrierValue out;
  out.value = r - (p.r_obs + half);
  out.grad.resize(4);
  const double dh = 0.5 * p.tau_m;  // d(half)/dv
  out.grad(0) = px / r;
  out.grad(1) = py / r;
  out.grad(2) = half * (-px * s + py * c) / r;
  out.grad(3) = dh * (px * c + py * s) / r - dh;
  return out;
}

Plant make_vehicle(const VehicleParams& p, std::string label) {
  p.validate();
  Plant pl;
  pl.label = std::move(label);
  pl.n = 4;
  pl.m = 2;
  pl.f = [p](const VectorXd& x) {
    VectorXd r(4);
    const double h = std::pow(x(0) * x(0) + x(1) * x(1), p.slope_exponent);
    r << p.k_v * x(3) * std::cos(x(2)), p.k_v * x(3) * std::sin(x(2)), 0.0, -p.mu * x(3) + p.s_e * h;
    return r;
  };
  pl.g = [p](const VectorXd&) {
    MatrixXd r = MatrixXd::Zero(4, 2);
    r(2, 0) = p.k_w;
    r(3, 1) = p.k_a;
    return r;
  };
  pl.barrier = [p](const VectorXd& x) { return vehicle_cbf(x, p).value; };
  pl.barrier_grad = [p](const VectorXd& x) { return vehicle_cbf(x, p).grad; };
  VectorXd lo(2), hi(2);
  lo << -p.w_max, -p.a_max;
  hi << p.w_max, p.a_max;
  pl.u_lower = lo;
  pl.u_upper = hi;
  return pl;
}

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  double r = std::fmod(a + pi, 2.0 * pi);
  if (r <= 0.0) r += 2.0 * pi;
  return r - pi;
}

VectorXd vehicle_reference(const VectorXd& x, double t, const VehicleParams& p) {
  const auto idx = static_cast<std::size_t>(std::floor(t / p.period)) % p.targets.size();
  const Eigen::Vector2d& tgt = p.targets[idx];
  const double heading = std::atan2(tgt.y() - x(1), tgt.x() - x(0));
  VectorXd u(2);
  u(0) = std::clamp(p.k_heading * wrap_angle(heading - x(2)), -p.w_max, p.w_max);
  double a = p.k_speed * (p.v_d - x(3));
  if (x(3) <= p.v_min) a = std::max(a, 0.0);
  if (x(3) >= p.v_max) a = std::min(a, 0.0);
  u(1) = std::clamp(a, -p.a_max, p.a_max);
  return u;
}

}  // namespace safecbf
