#include "safecbf/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace safecbf {

int LearnerConfig::steps() const { return static_cast<int>(std::llround(t_max / dt_ctrl)); }
int LearnerConfig::tau_steps() const { return static_cast<int>(std::llround(tau / dt_ctrl)); }
int LearnerConfig::substeps() const { return static_cast<int>(std::llround(dt_ctrl / dt_sim)); }

void LearnerConfig::validate() const {
  if (epsilon && !(*epsilon > 0.0)) throw std::invalid_argument("learner: epsilon must be > 0");
  if (!(dt_ctrl > 0.0) || !(dt_sim > 0.0)) throw std::invalid_argument("learner: time steps must be > 0");
  if (std::abs(substeps() * dt_sim - dt_ctrl) > 1e-9 * dt_ctrl) {
    throw std::invalid_argument("learner: dt_ctrl must be an integer multiple of dt_sim");
  }
  if (!(tau >= dt_ctrl) || std::abs(tau_steps() * dt_ctrl - tau) > 1e-9 * tau) {
    throw std::invalid_argument("learner: tau must be an integer multiple of dt_ctrl");
  }
  if (!(t_max > 0.0)) throw std::invalid_argument("learner: t_max must be > 0");
  if (!(alpha.margin >= 1.0)) throw std::invalid_argument("learner: alpha_margin must be >= 1");
  if (!(escalation > 1.0) || max_retries < 0) throw std::invalid_argument("learner: bad escalation settings");
  if (noise < 0.0) throw std::invalid_argument("learner: noise must be >= 0");
}

std::string Scenario::prior_path() const {
  namespace fs = std::filesystem;
  if (learner.prior_dataset.empty()) return {};
  fs::path p(learner.prior_dataset);
  if (p.is_absolute() || source.empty()) return p.string();
  return (fs::path(source).parent_path() / p).string();
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

const std::vector<std::string>& known_variants() {
  static const std::vector<std::string> v{"alg1", "alg1_prior", "socp_time_only", "qp_nominal", "qp_oracle"};
  return v;
}

namespace {

VectorXd to_vec(const std::vector<double>& v) { return Eigen::Map<const VectorXd>(v.data(), v.size()); }

KernelConfig read_kernel(const ConfigFile& cf, const std::string& sec, int n, int m) {
  KernelConfig k;
  k.noise_std = cf.number(sec + ".noise_std");
  const auto sv = cf.numbers(sec + ".signal_variance");
  const auto ls = cf.matrix(sec + ".length_scales");
  if (static_cast<int>(sv.size()) != m + 1 || static_cast<int>(ls.size()) != m + 1) {
    const auto* v = cf.find(sec + ".signal_variance");
    throw ConfigError(cf.name(), v ? v->line : 0,
                      sec + ": need " + std::to_string(m + 1) + " kernel components (drift + one per input)");
  }
  for (int i = 0; i <= m; ++i) {
    if (static_cast<int>(ls[i].size()) != n) {
      const auto* v = cf.find(sec + ".length_scales");
      throw ConfigError(cf.name(), v ? v->line : 0,
                        sec + ".length_scales: row " + std::to_string(i) + " needs " + std::to_string(n) + " entries");
    }
    k.components.push_back({sv[i], to_vec(ls[i])});
  }
  try {
    k.validate();
  } catch (const std::invalid_argument& e) {
    const auto* v = cf.find(sec + ".signal_variance");
    throw ConfigError(cf.name(), v ? v->line : 0, sec + ": " + e.what());
  }
  return k;
}

AccParams read_acc(const ConfigFile& cf, const std::string& sec, const AccParams& shared) {
  AccParams p = shared;
  p.mass = cf.number(sec + ".mass", p.mass);
  p.f0 = cf.number(sec + ".f0", p.f0);
  p.f1 = cf.number(sec + ".f1", p.f1);
  p.f2 = cf.number(sec + ".f2", p.f2);
  return p;
}

VehicleParams read_vehicle(const ConfigFile& cf, const std::string& sec, const VehicleParams& shared) {
  VehicleParams p = shared;
  p.k_v = cf.number(sec + ".k_v", p.k_v);
  p.k_w = cf.number(sec + ".k_w", p.k_w);
  p.k_a = cf.number(sec + ".k_a", p.k_a);
  p.mu = cf.number(sec + ".mu", p.mu);
  p.s_e = cf.number(sec + ".s_e", p.s_e);
  p.slope_exponent = cf.number(sec + ".slope_exponent", p.slope_exponent);
  return p;
}

template <class F>
auto checked(const ConfigFile& cf, const std::string& key, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    const auto* v = cf.find(key);
    throw ConfigError(cf.name(), v ? v->line : 0, e.what());
  }
}

}  // namespace

Scenario scenario_from_config(const ConfigFile& cf) {
  Scenario sc;
  sc.source = cf.name();
  sc.config_hash = fnv1a(cf.text());
  sc.plant = cf.string("plant");
  sc.x0 = to_vec(cf.numbers("x0"));
  sc.output_dir = cf.string("output", "out");
  sc.variants = cf.strings("variants", known_variants());
  for (const auto& v : sc.variants) {
    if (std::find(known_variants().begin(), known_variants().end(), v) == known_variants().end()) {
      throw ConfigError(cf.name(), cf.find("variants")->line, "unknown variant '" + v + "'");
    }
  }
  {
    const auto seeds = cf.numbers("seeds", std::vector<double>{});
    if (seeds.empty()) {
      const int count = cf.integer("seed_count", 20);
      const int base = cf.integer("seed_base", 1);
      for (int i = 0; i < count; ++i) sc.seeds.push_back(static_cast<std::uint64_t>(base + i));
    } else {
      for (double s : seeds) sc.seeds.push_back(static_cast<std::uint64_t>(s));
    }
  }

  if (sc.plant == "acc") {
    AccParams shared;
    shared.v0 = cf.number("acc.v0", shared.v0);
    shared.vd = cf.number("acc.vd", shared.vd);
    shared.headway = cf.number("acc.headway", shared.headway);
    shared.input_scale = cf.number("acc.input_scale", shared.input_scale);
    const AccParams nom = read_acc(cf, "acc.nominal", shared);
    const AccParams tru = read_acc(cf, "acc.true", shared);
    sc.nominal = checked(cf, "acc.nominal.mass", [&] { return make_acc(nom, "acc_nominal"); });
    sc.truth = checked(cf, "acc.true.mass", [&] { return make_acc(tru, "acc_true"); });
    sc.reference = [](const VectorXd&, double) { return VectorXd::Zero(1).eval(); };
  } else if (sc.plant == "vehicle4d") {
    VehicleParams shared;
    shared.r_obs = cf.number("vehicle.r_obs", shared.r_obs);
    shared.v_min = cf.number("vehicle.v_min", shared.v_min);
    shared.v_max = cf.number("vehicle.v_max", shared.v_max);
    shared.v_d = cf.number("vehicle.v_d", shared.v_d);
    shared.w_max = cf.number("vehicle.w_max", shared.w_max);
    shared.a_max = cf.number("vehicle.a_max", shared.a_max);
    shared.tau_m = cf.number("vehicle.tau_m", shared.tau_m);
    shared.period = cf.number("vehicle.period", shared.period);
    shared.k_heading = cf.number("vehicle.k_heading", shared.k_heading);
    shared.k_speed = cf.number("vehicle.k_speed", shared.k_speed);
    if (cf.has("vehicle.targets")) {
      shared.targets.clear();
      for (const auto& row : cf.matrix("vehicle.targets")) {
        if (row.size() != 2) throw ConfigError(cf.name(), cf.find("vehicle.targets")->line, "targets are (x, y) pairs");
        shared.targets.emplace_back(row[0], row[1]);
      }
    }
    VehicleParams nominal_defaults = shared;
    const VehicleParams nom = read_vehicle(cf, "vehicle.nominal", nominal_defaults);
    const VehicleParams skid = vehicle_true_params();
    VehicleParams true_defaults = shared;
    true_defaults.k_v = skid.k_v;
    true_defaults.k_w = skid.k_w;
    true_defaults.k_a = skid.k_a;
    true_defaults.mu = skid.mu;
    true_defaults.s_e = skid.s_e;
    const VehicleParams tru = read_vehicle(cf, "vehicle.true", true_defaults);
    sc.nominal = checked(cf, "vehicle.r_obs", [&] { return make_vehicle(nom, "vehicle_nominal"); });
    sc.truth = checked(cf, "vehicle.r_obs", [&] { return make_vehicle(tru, "vehicle_true"); });
    // The reference controller only knows the nominal model's settings.
    sc.reference = [nom](const VectorXd& x, double t) { return vehicle_reference(x, t, nom); };
  } else {
    throw ConfigError(cf.name(), cf.find("plant")->line, "unknown plant '" + sc.plant + "' (acc | vehicle4d)");
  }
  const int n = sc.nominal.n;
  const int m = sc.nominal.m;
  if (sc.x0.size() != n) throw ConfigError(cf.name(), cf.find("x0")->line, "x0 needs " + std::to_string(n) + " entries");

  sc.kernel_b = read_kernel(cf, "kernel", n, m);

  // Filter.
  auto& f = sc.filter;
  f.gamma_c = cf.number("filter.gamma_c", 1.0);
  f.sample_margin = cf.number("filter.sample_margin", 0.0);
  const std::string mode = cf.string("filter.beta_mode", "fixed");
  if (mode == "fixed") {
    f.beta.mode = BetaSchedule::Mode::fixed;
  } else if (mode == "info_gain") {
    f.beta.mode = BetaSchedule::Mode::info_gain;
  } else {
    throw ConfigError(cf.name(), cf.find("filter.beta_mode")->line, "beta_mode must be fixed or info_gain");
  }
  f.beta.beta0 = cf.number("filter.beta0", 2.0);
  f.beta.eta = cf.number("filter.eta", 1.0);
  f.beta.kappa = cf.number("filter.kappa", 0.01);
  f.beta.delta = cf.number("filter.delta", 0.05);
  f.solver.tol = cf.number("filter.solver_tol", 1e-8);
  f.solver.max_iter = cf.integer("filter.solver_max_iter", 100);
  f.clf.enabled = cf.boolean("clf.enabled", false);
  f.clf.rate = cf.number("clf.rate", 1.0);
  f.clf.penalty = cf.number("clf.penalty", 10.0);
  checked(cf, "filter.gamma_c", [&] {
    f.validate();
    (void)beta(0, f.beta);
    return 0;
  });
  if (f.clf.enabled) {
    if (!sc.nominal.has_clf()) throw ConfigError(cf.name(), cf.find("clf.enabled")->line, "plant has no CLF");
    sc.kernel_v = read_kernel(cf, "kernel_v", n, m);
  }

  // Learner.
  auto& l = sc.learner;
  if (const auto* e = cf.find("learner.epsilon")) {
    if (const auto* s = std::get_if<std::string>(&e->data)) {
      if (*s != "auto") throw ConfigError(cf.name(), e->line, "epsilon must be a number or \"auto\"");
    } else {
      l.epsilon = cf.number("learner.epsilon");
    }
  }
  l.tau = cf.number("learner.tau", l.tau);
  l.t_max = cf.number("learner.t_max", l.t_max);
  l.dt_ctrl = cf.number("learner.dt_ctrl", l.dt_ctrl);
  l.dt_sim = cf.number("learner.dt_sim", l.dt_sim);
  l.alpha.margin = cf.number("learner.alpha_margin", l.alpha.margin);
  l.alpha.floor = cf.number("learner.alpha_floor", l.alpha.floor);
  l.escalation = cf.number("learner.escalation", l.escalation);
  l.max_retries = cf.integer("learner.max_retries", l.max_retries);
  l.noise = cf.number("learner.noise", l.noise);
  l.prior_dataset = cf.string("learner.prior_dataset", "");
  checked(cf, "learner.tau", [&] {
    l.validate();
    return 0;
  });

  // Lambda map.
  auto& g = sc.grid;
  g.ix = cf.integer("lambda_map.x_index", 0);
  g.iy = cf.integer("lambda_map.y_index", 1);
  const auto xr = cf.numbers("lambda_map.x_range", std::vector<double>{sc.x0(g.ix) - 1.0, sc.x0(g.ix) + 1.0, 41});
  const auto yr = cf.numbers("lambda_map.y_range", std::vector<double>{sc.x0(g.iy) - 1.0, sc.x0(g.iy) + 1.0, 41});
  if (xr.size() != 3 || yr.size() != 3) {
    throw ConfigError(cf.name(), cf.find("lambda_map.x_range") ? cf.find("lambda_map.x_range")->line : 0,
                      "ranges are [lo, hi, count]");
  }
  g.x_lo = xr[0];
  g.x_hi = xr[1];
  g.nx = static_cast<int>(xr[2]);
  g.y_lo = yr[0];
  g.y_hi = yr[1];
  g.ny = static_cast<int>(yr[2]);
  g.base = cf.has("lambda_map.base") ? to_vec(cf.numbers("lambda_map.base")) : sc.x0;
  if (g.ix < 0 || g.ix >= n || g.iy < 0 || g.iy >= n || g.ix == g.iy || g.base.size() != n || g.nx < 2 || g.ny < 2) {
    throw ConfigError(cf.name(), 0, "lambda_map: invalid slice specification");
  }

  // Warmup.
  sc.warmup.points = cf.integer("warmup.points", 20);
  sc.warmup.spread = cf.has("warmup.spread") ? to_vec(cf.numbers("warmup.spread")) : VectorXd::Zero(n);
  sc.warmup.alpha_scale = cf.number("warmup.alpha_scale", 1.0);
  if (sc.warmup.spread.size() != n) throw ConfigError(cf.name(), cf.find("warmup.spread")->line, "spread size");

  cf.reject_unused();
  return sc;
}

Scenario load_scenario(const std::string& path) { return scenario_from_config(ConfigFile::load(path)); }

}  // namespace safecbf
