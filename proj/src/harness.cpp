#include "safecbf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "safecbf/dataset_io.hpp"

namespace safecbf {

double SimTrace::min_b() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) m = std::min(m, r.b);
  return m;
}

int SimTrace::count(Trigger k) const {
  int c = 0;
  for (const auto& r : rows) c += (r.trigger == k) ? 1 : 0;
  return c;
}

Dataset prefix(const Dataset& d, std::size_t n) {
  n = std::min(n, d.size());
  const auto& xs = d.states();
  const auto us = d.inputs();
  const auto& zs = d.measurements();
  return Dataset::batch(d.kernel(), {xs.begin(), xs.begin() + n}, {us.begin(), us.begin() + n},
                        {zs.begin(), zs.begin() + n});
}

Dataset load_prior(const Scenario& sc) {
  const std::string path = sc.prior_path();
  if (path.empty()) throw std::runtime_error("alg1_prior needs learner.prior_dataset in the config");
  const Dataset raw = load_dataset(path);
  if (raw.state_dim() != sc.nominal.n || raw.input_dim() != sc.nominal.m) {
    throw DimensionError("prior dataset dimensions do not match the plant");
  }
  return Dataset::batch(sc.kernel_b, raw.states(), raw.inputs(), raw.measurements());
}

Dataset generate_warmup(const Scenario& sc, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset d(sc.kernel_b);
  const int k_pts = sc.warmup.points;
  // Latin hypercube over the box x0 +- spread: one point per stratum and axis.
  std::vector<std::vector<int>> strata(sc.x0.size());
  for (auto& s : strata) {
    s.resize(k_pts);
    for (int k = 0; k < k_pts; ++k) s[k] = k;
    std::shuffle(s.begin(), s.end(), rng);
  }
  for (int k = 0; k < k_pts; ++k) {
    VectorXd x = sc.x0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double frac = (strata[i][k] + unit(rng)) / k_pts;
      x(i) += sc.warmup.spread(i) * (2.0 * frac - 1.0);
    }
    const auto info = get_lambda_dagger(x, d, sc.nominal, sc.filter);
    VectorXd u;
    if (info.lambda < -kTolEig) {
      u = sc.warmup.alpha_scale * u_safe(info.cd, sc.learner.alpha);
    } else {
      // No backup direction from the model alone; probe along the nominal control direction.
      const auto lie = lie_derivatives(sc.nominal, x);
      u = sc.warmup.alpha_scale * lie.lg.transpose().normalized();
    }
    d.add_measurement(x, u, measure(sc.truth, sc.nominal, x, u, rng, sc.learner.noise));
  }
  return d;
}

namespace {

bool outside_box(const Plant& pl, const VectorXd& u) {
  constexpr double tol = 1e-9;
  if (pl.u_lower && ((u - *pl.u_lower).array() < -tol).any()) return true;
  if (pl.u_upper && ((*pl.u_upper - u).array() < -tol).any()) return true;
  return false;
}

}  // namespace

SimTrace run_episode(const Scenario& sc, const std::string& variant, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  if (std::find(known_variants().begin(), known_variants().end(), variant) == known_variants().end()) {
    throw std::invalid_argument("unknown variant '" + variant + "'");
  }
  SimTrace tr;
  tr.plant = sc.plant;
  tr.variant = variant;
  tr.seed = seed;
  tr.config_hash = sc.config_hash;

  std::mt19937_64 rng(seed);
  LearnerState st{variant == "alg1_prior" ? load_prior(sc) : Dataset(sc.kernel_b), std::nullopt, 0, {}, 0};
  if (sc.kernel_v) st.dv = Dataset(*sc.kernel_v);

  const bool learning = variant == "alg1" || variant == "alg1_prior" || variant == "socp_time_only";
  const double lambda0 = get_lambda_dagger(sc.x0, st.db, sc.nominal, sc.filter).lambda;
  tr.epsilon = sc.learner.epsilon ? *sc.learner.epsilon : default_epsilon(lambda0);
  const StepContext ctx{sc, tr.epsilon, variant != "socp_time_only", rng};

  const auto& lc = sc.learner;
  const int steps = lc.steps();
  const int sub = lc.substeps();
  const Dynamics true_dyn = [&sc](const VectorXd& x, const VectorXd& u) { return sc.truth.dynamics(x, u); };
  tr.rows.reserve(steps);
  VectorXd x = sc.x0;
  for (int k = 0; k < steps; ++k) {
    const double t = k * lc.dt_ctrl;
    TraceRow row;
    row.t = t;
    row.x = x;
    row.b = sc.truth.barrier(x);
    try {
      if (learning) {
        const StepOutcome o = learner_step(st, x, t, ctx);
        row.u = o.u;
        row.lambda = o.lambda;
        row.kind = o.kind;
        row.trigger = o.trigger;
        row.status = o.status;
        row.slack = o.slack;
        row.bound_ok = o.bound_ok;
        row.mode = o.mode;
        if (o.kind != FeasibilityCase::infeasible) {
          const HMatrix hm = h_matrix(o.cd);
          row.h_checked = true;
          row.h_quad = hm.quadratic(o.u);
          row.h_linear = linear_part(o.cd, o.u);
        }
      } else {
        const Plant& model = variant == "qp_oracle" ? sc.truth : sc.nominal;
        const FilterResult res = cbf_clf_qp(x, sc.reference(x, t), model, sc.filter);
        const LambdaInfo info = get_lambda_dagger(x, st.db, sc.nominal, sc.filter);
        row.u = res.u;
        row.lambda = info.lambda;
        row.kind = classify(info.cd, lc.alpha).kind();
        row.status = (sc.filter.clf.enabled && model.has_clf()) ? std::string(to_string(res.status)) : "closed_form";
        row.slack = res.slack;
        row.mode = variant == "qp_oracle" ? FilterMode::qp_oracle : FilterMode::qp_nominal;
        const auto lie = lie_derivatives(sc.nominal, x);
        const double mu = (info.cd.lf_hat - lie.lf) + (info.cd.lg_hat - lie.lg).dot(row.u);
        const double sigma = (info.cd.sqrt_g * row.u + info.cd.sqrt_f).norm();
        row.bound_ok = std::abs(mu - delta_b(sc.truth, sc.nominal, x, row.u)) <= info.cd.beta * sigma;
      }
    } catch (const SafetyBudgetExceeded& e) {
      tr.termination = "safety_budget_exceeded";
      tr.message = e.what();
      break;
    } catch (const FilterFailure& e) {
      tr.termination = "filter_failure";
      tr.message = e.what();
      break;
    }
    row.n = st.db.size();
    if (outside_box(sc.truth, row.u)) ++tr.input_bound_violations;
    const VectorXd u = row.u;
    const bool infeasible = row.kind == FeasibilityCase::infeasible && learning;
    tr.rows.push_back(std::move(row));
    if (infeasible) {
      tr.termination = "infeasible";
      tr.message = "classification infeasible at t = " + std::to_string(t);
      break;
    }
    try {
      for (int s = 0; s < sub; ++s) x = integrate_step(true_dyn, x, u, lc.dt_sim);
    } catch (const NonFiniteState& e) {
      tr.termination = "non_finite";
      tr.message = e.what();
      break;
    }
  }
  tr.events = st.events;
  tr.final_data = std::move(st.db);
  tr.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return tr;
}

// ---------------------------------------------------------------- output

std::string trace_header(int n, int m) {
  std::string h = "t";
  for (int i = 0; i < n; ++i) h += ",x" + std::to_string(i);
  for (int i = 0; i < m; ++i) h += ",u" + std::to_string(i);
  h += ",B,lambda_dagger,case,N,trigger,status,slack,bound_ok";
  return h;
}

namespace {
void put(std::string& s, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  s += buf;
}
}  // namespace

std::string trace_csv(const SimTrace& tr) {
  const int n = tr.rows.empty() ? 0 : static_cast<int>(tr.rows.front().x.size());
  const int m = tr.rows.empty() ? 0 : static_cast<int>(tr.rows.front().u.size());
  std::string out = trace_header(n, m) + "\n";
  for (const auto& r : tr.rows) {
    put(out, r.t);
    for (Eigen::Index i = 0; i < r.x.size(); ++i) {
      out += ',';
      put(out, r.x(i));
    }
    for (Eigen::Index i = 0; i < r.u.size(); ++i) {
      out += ',';
      put(out, r.u(i));
    }
    out += ',';
    put(out, r.b);
    out += ',';
    put(out, r.lambda);
    out += ',';
    out += to_string(r.kind);
    out += ',' + std::to_string(r.n) + ',';
    out += to_string(r.trigger);
    out += ',' + r.status + ',';
    put(out, r.slack);
    out += r.bound_ok ? ",1\n" : ",0\n";
  }
  return out;
}

nlohmann::json metrics_json(const SimTrace& tr) {
  int feasible = 0, ok = 0;
  for (const auto& r : tr.rows) {
    feasible += r.kind != FeasibilityCase::infeasible ? 1 : 0;
    ok += r.bound_ok ? 1 : 0;
  }
  const double rows = std::max<double>(1.0, static_cast<double>(tr.rows.size()));
  nlohmann::json j;
  j["plant"] = tr.plant;
  j["variant"] = tr.variant;
  j["seed"] = tr.seed;
  j["config_hash"] = tr.config_hash;
  j["termination"] = tr.termination;
  if (!tr.message.empty()) j["message"] = tr.message;
  j["steps"] = tr.rows.size();
  j["min_B"] = tr.rows.empty() ? 0.0 : tr.min_b();
  j["n_event_triggers"] = tr.count(Trigger::event);
  j["n_time_triggers"] = tr.count(Trigger::time);
  j["final_N"] = tr.final_data.size();
  j["feasible_rate"] = feasible / rows;
  j["bound_ok_rate"] = ok / rows;
  j["epsilon"] = tr.epsilon;
  j["input_bound_violations"] = tr.input_bound_violations;
  j["runtime"] = tr.runtime;
  return j;
}

void write_episode(const SimTrace& tr, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::string stem = tr.variant + "_seed" + std::to_string(tr.seed);
  {
    std::ofstream f(fs::path(dir) / (stem + ".csv"), std::ios::binary);
    f << trace_csv(tr);
  }
  std::ofstream f(fs::path(dir) / (stem + ".metrics.json"));
  f << metrics_json(tr).dump(2) << "\n";
}

int thread_count() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("SAFE_CBF_LAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<int>(std::min<long>(v, 1024));
  }
  return hw;
}

std::vector<SimTrace> run_many(const Scenario& sc, const std::vector<std::string>& variants,
                               const std::vector<std::uint64_t>& seeds) {
  std::vector<std::pair<std::string, std::uint64_t>> jobs;
  for (const auto& v : variants) {
    for (auto s : seeds) jobs.emplace_back(v, s);
  }
  std::vector<SimTrace> out(jobs.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        out[i] = run_episode(sc, jobs[i].first, jobs[i].second);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int nt = std::min<int>(thread_count(), static_cast<int>(jobs.size()));
  std::vector<std::thread> pool;
  for (int i = 1; i < nt; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<CompareRow> compare_rows(const std::vector<SimTrace>& traces) {
  std::vector<CompareRow> rows;
  for (const auto& tr : traces) {
    const double mb = tr.rows.empty() ? 0.0 : tr.min_b();
    rows.push_back({tr.variant, tr.seed, mb, mb < 0.0 || !tr.completed(), tr.count(Trigger::event),
                    tr.count(Trigger::time), tr.termination});
  }
  return rows;
}

std::string compare_table(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  os << "variant,seed,min_B,violation,n_event,n_time,termination\n";
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", r.min_b);
    os << r.variant << ',' << r.seed << ',' << buf << ',' << (r.violated ? 1 : 0) << ',' << r.n_event << ','
       << r.n_time << ',' << r.termination << '\n';
  }
  os << "\nvariant,episodes,safe,safety_rate\n";
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (std::find(order.begin(), order.end(), r.variant) == order.end()) order.push_back(r.variant);
  }
  for (const auto& v : order) {
    int total = 0, safe = 0;
    for (const auto& r : rows) {
      if (r.variant != v) continue;
      ++total;
      safe += r.violated ? 0 : 1;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", total ? static_cast<double>(safe) / total : 0.0);
    os << v << ',' << total << ',' << safe << ',' << buf << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------- lambda maps

int LambdaMap::negative_count(std::size_t label) const {
  return static_cast<int>(std::count_if(values[label].begin(), values[label].end(), [](double v) { return v < 0.0; }));
}

bool LambdaMap::contains(std::size_t b, std::size_t a) const {
  for (std::size_t i = 0; i < values[a].size(); ++i) {
    if (values[a][i] < 0.0 && !(values[b][i] < 0.0)) return false;
  }
  return true;
}

LambdaMap lambda_map(const Scenario& sc, const std::vector<std::pair<std::string, const Dataset*>>& data) {
  const auto& g = sc.grid;
  LambdaMap lm;
  for (int i = 0; i < g.nx; ++i) lm.xs.push_back(g.x_lo + (g.x_hi - g.x_lo) * i / (g.nx - 1));
  for (int j = 0; j < g.ny; ++j) lm.ys.push_back(g.y_lo + (g.y_hi - g.y_lo) * j / (g.ny - 1));
  for (const auto& [label, d] : data) {
    lm.labels.push_back(label);
    std::vector<double> vals;
    vals.reserve(lm.xs.size() * lm.ys.size());
    for (double y : lm.ys) {
      for (double xv : lm.xs) {
        VectorXd x = g.base;
        x(g.ix) = xv;
        x(g.iy) = y;
        vals.push_back(get_lambda_dagger(x, *d, sc.nominal, sc.filter).lambda);
      }
    }
    lm.values.push_back(std::move(vals));
  }
  return lm;
}

std::string lambda_map_csv(const LambdaMap& lm, const Scenario& sc) {
  std::string out = "x" + std::to_string(sc.grid.ix) + ",x" + std::to_string(sc.grid.iy);
  for (const auto& l : lm.labels) out += ",lambda_" + l;
  out += '\n';
  std::size_t k = 0;
  for (double y : lm.ys) {
    for (double xv : lm.xs) {
      put(out, xv);
      out += ',';
      put(out, y);
      for (const auto& v : lm.values) {
        out += ',';
        put(out, v[k]);
      }
      out += '\n';
      ++k;
    }
  }
  return out;
}

}  // namespace safecbf
