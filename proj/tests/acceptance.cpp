// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--expect-fail 8,...] [--report path]
//
// Exit status is 0 when the set of failing criteria equals the expected set.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "safecbf/harness.hpp"
#include "safecbf/plants.hpp"
#include "safecbf/verify.hpp"

#ifndef SAFECBF_SOURCE_DIR
#define SAFECBF_SOURCE_DIR "."
#endif

using namespace safecbf;

namespace {

std::string cfg(const char* name) { return std::string(SAFECBF_SOURCE_DIR) + "/configs/" + name; }

struct Outcome {
  std::set<int> failed;
  std::ostringstream log;

  void line(int id, bool ok, const std::string& detail) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "criterion %2d: %s  ", id, ok ? "PASS" : "FAIL");
    log << buf << detail << "\n";
    std::printf("%s%s\n", buf, detail.c_str());
    std::fflush(stdout);
    if (!ok) failed.insert(id);
  }
  void note(const std::string& s) {
    log << "              " << s << "\n";
    std::printf("              %s\n", s.c_str());
    std::fflush(stdout);
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const std::vector<SimTrace>* find_set(const std::vector<std::pair<std::string, std::vector<SimTrace>>>& all,
                                      const std::string& key) {
  for (const auto& [k, v] : all)
    if (k == key) return &v;
  return nullptr;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> expected;
  std::string report = "acceptance_report.txt";
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--expect-fail") && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) expected.insert(std::stoi(tok));
    } else if (!std::strcmp(argv[i], "--report") && i + 1 < argc) {
      report = argv[++i];
    } else {
      std::fprintf(stderr, "usage: acceptance [--expect-fail ids] [--report path]\n");
      return 2;
    }
  }

  Outcome out;
  const auto t_start = std::chrono::steady_clock::now();

  // Verify suites (1-4).
  const VerifyReport feas = verify_feasibility(500, 1);
  const VerifyReport solv = verify_solver(300, 2);
  const VerifyReport gp = verify_gp(200, 3);

  out.line(1, feas.summary["disagreements"].get<int>() == 0 && feas.runtime <= 60.0,
           fmt("%d instances, %d outside the band, %d disagreements, %.1f s", feas.instances, feas.checked,
               feas.summary["disagreements"].get<int>(), feas.runtime));

  // Episodes.
  const Scenario acc = load_scenario(cfg("acc.toml"));
  const Scenario veh = load_scenario(cfg("vehicle.toml"));
  std::vector<std::pair<std::string, std::vector<SimTrace>>> runs;
  for (const auto& v : acc.variants) runs.emplace_back("acc/" + v, run_many(acc, {v}, acc.seeds));
  for (const auto& v : veh.variants) runs.emplace_back("vehicle4d/" + v, run_many(veh, {v}, veh.seeds));

  // 2: H-matrix check on every witness / filter solution.
  {
    long checked = 0, bad = 0;
    double worst_q = -1e300, worst_l = 1e300;
    for (const auto& [k, trs] : runs)
      for (const auto& tr : trs)
        for (const auto& r : tr.rows) {
          if (!r.h_checked) continue;
          ++checked;
          worst_q = std::max(worst_q, r.h_quad);
          worst_l = std::min(worst_l, r.h_linear);
          if (!(r.h_quad <= kHTol && r.h_linear >= -kHTol)) ++bad;
        }
    const int vf = feas.summary["h_failures"].get<int>() + feas.summary["socp_failures"].get<int>();
    out.line(2, bad == 0 && vf == 0 && checked > 0,
             fmt("%ld episode inputs checked, %ld violations (max quad %.3g, min linear %.3g); verify: %d", checked,
                 bad, worst_q, worst_l, vf));
  }

  out.line(3,
           gp.failures == 0 && gp.summary["max_incremental_gap"].get<double>() <= kGpTol &&
               gp.summary["max_affine_residual"].get<double>() <= kStructureTol &&
               gp.summary["max_quadratic_residual"].get<double>() <= kStructureTol,
           fmt("%d sequences, gap %.3g, affine residual %.3g, quadratic residual %.3g", gp.instances,
               gp.summary["max_incremental_gap"].get<double>(), gp.summary["max_affine_residual"].get<double>(),
               gp.summary["max_quadratic_residual"].get<double>()));

  out.line(4, solv.failures == 0 && solv.instances == 300,
           fmt("%d instances, %d failures, objective gap %.3g, violation %.3g", solv.instances, solv.failures,
               solv.summary["max_objective_gap"].get<double>(), solv.summary["max_violation"].get<double>()));

  // 5: ACC ordering.
  {
    bool ok = true;
    double slowest = 0.0;
    std::string detail;
    for (const std::string v : {"alg1", "alg1_prior", "qp_oracle", "qp_nominal", "socp_time_only"}) {
      const auto* trs = find_set(runs, "acc/" + v);
      if (!trs) {
        ok = false;
        detail += v + ": missing; ";
        continue;
      }
      int hit = 0;
      for (const auto& tr : *trs) {
        slowest = std::max(slowest, tr.runtime);
        if (v == "qp_nominal") hit += tr.completed() && tr.min_b() < 0.0;
        else if (v == "socp_time_only") hit += tr.termination == "infeasible" || tr.min_b() < 0.0;
        else hit += tr.completed() && tr.min_b() > 0.0;
      }
      const int need = v == "socp_time_only" ? 18 : static_cast<int>(trs->size());
      ok = ok && hit >= need && trs->size() == 20;
      detail += fmt("%s %d/%zu; ", v.c_str(), hit, trs->size());
    }
    ok = ok && slowest <= 30.0;
    out.line(5, ok, detail + fmt("slowest episode %.2f s", slowest));
  }

  // 6: lambda < 0 and feasible at every step of completed alg1 episodes.
  {
    bool ok = true;
    std::string detail;
    for (const std::string p : {"acc", "vehicle4d"}) {
      const auto* trs = find_set(runs, p + "/alg1");
      int completed = 0;
      long steps = 0, bad = 0;
      double worst = -1e300;
      for (const auto& tr : *trs) {
        if (!tr.completed()) continue;
        ++completed;
        for (const auto& r : tr.rows) {
          ++steps;
          worst = std::max(worst, r.lambda);
          if (!(r.lambda < 0.0) || r.kind == FeasibilityCase::infeasible) ++bad;
        }
      }
      ok = ok && bad == 0 && completed > 0;
      detail += fmt("%s: %d completed, %ld steps, %ld bad, max lambda %.3g; ", p.c_str(), completed, steps, bad, worst);
    }
    out.line(6, ok, detail);
  }

  // 7: calibration per episode.
  {
    double worst = 1.0;
    int episodes = 0;
    for (const auto& [k, trs] : runs) {
      if (k.find("alg1") == std::string::npos && k.find("socp") == std::string::npos) continue;
      for (const auto& tr : trs) {
        if (tr.rows.empty()) continue;
        ++episodes;
        worst = std::min(worst, metrics_json(tr)["bound_ok_rate"].get<double>());
      }
    }
    out.line(7, worst >= 0.95 && episodes > 0, fmt("%d learning episodes, worst bound_ok rate %.4f", episodes, worst));
  }

  // 8: lambda-map growth on the first ACC alg1 episode.
  {
    const SimTrace& tr = find_set(runs, "acc/alg1")->front();
    const Dataset empty(acc.kernel_b);
    // Dataset size right after the first event-triggered append.
    std::size_t first_n = tr.final_data.size();
    for (const auto& r : tr.rows)
      if (r.trigger == Trigger::event) {
        first_n = r.n;
        break;
      }
    const Dataset first = prefix(tr.final_data, first_n);
    const LambdaMap lm = lambda_map(acc, {{"empty", &empty}, {"first_event", &first}, {"final", &tr.final_data}});
    const int n0 = lm.negative_count(0), n1 = lm.negative_count(1), n2 = lm.negative_count(2);
    const bool strict = lm.contains(2, 0) && n2 > n0 && n2 >= 1.1 * n0;
    out.line(8, strict,
             fmt("empty %d, final %d of %zu cells negative (needs strict superset with +10%%)", n0, n2,
                 lm.xs.size() * lm.ys.size()));
    out.note(fmt("supplementary: first event (N=%zu) %d -> final (N=%zu) %d, superset %s, growth %+.0f%%", first_n, n1,
                 tr.final_data.size(), n2, lm.contains(2, 1) ? "yes" : "no",
                 n1 > 0 ? 100.0 * (n2 - n1) / n1 : 0.0));
  }

  // 9: vehicle ordering.
  {
    const auto* a = find_set(runs, "vehicle4d/alg1");
    const auto* q = find_set(runs, "vehicle4d/qp_nominal");
    int safe = 0, with_events = 0, unsafe = 0;
    for (const auto& tr : *a) {
      safe += tr.completed() && tr.min_b() > 0.0;
      with_events += tr.count(Trigger::event) >= 1;
    }
    for (const auto& tr : *q) unsafe += tr.min_b() < 0.0;
    out.line(9, a->size() == 20 && safe == 20 && with_events == 20 && unsafe >= 18,
             fmt("alg1 safe %d/%zu, with events %d/%zu; qp_nominal unsafe %d/%zu", safe, a->size(), with_events,
                 a->size(), unsafe, q->size()));
  }

  // 10: RK4 order on the harmonic oscillator.
  {
    const Dynamics osc = [](const VectorXd& s, const VectorXd&) {
      VectorXd d(2);
      d << s(1), -s(0);
      return d;
    };
    auto err = [&](double dt) {
      VectorXd s(2);
      s << 1.0, 0.0;
      const int n = static_cast<int>(std::lround(10.0 / dt));
      for (int k = 0; k < n; ++k) s = integrate_step(osc, s, VectorXd::Zero(1), dt);
      VectorXd exact(2);
      exact << std::cos(10.0), -std::sin(10.0);
      return (s - exact).norm();
    };
    const double e1 = err(1e-2), e2 = err(5e-3), e3 = err(2.5e-3);
    const double r1 = e1 / e2, r2 = e2 / e3;
    out.line(10, r1 >= 8.0 && r1 <= 32.0 && r2 >= 8.0 && r2 <= 32.0,
             fmt("errors %.3g %.3g %.3g, ratios %.2f %.2f (target 16)", e1, e2, e3, r1, r2));
  }

  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  std::string failed;
  for (int id : out.failed) failed += (failed.empty() ? "" : ",") + std::to_string(id);
  std::string exp;
  for (int id : expected) exp += (exp.empty() ? "" : ",") + std::to_string(id);
  out.note(fmt("total %.1f s; failing [%s], expected [%s]", total, failed.c_str(), exp.c_str()));

  std::ofstream(report) << out.log.str();
  return out.failed == expected ? 0 : 1;
}
