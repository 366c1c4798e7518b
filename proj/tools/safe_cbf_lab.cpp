#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "safecbf/dataset_io.hpp"
#include "safecbf/harness.hpp"
#include "safecbf/verify.hpp"

namespace fs = std::filesystem;
using namespace safecbf;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::string out;
};

void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << content;
}

std::string out_dir(const Common& c, const Scenario& sc) { return c.out.empty() ? sc.output_dir : c.out; }

std::vector<std::uint64_t> seeds_or_default(const Common& c, const Scenario& sc) {
  return c.seeds.empty() ? sc.seeds : c.seeds;
}

std::vector<std::string> variants_or_default(const Common& c, const Scenario& sc) {
  auto v = c.variants.empty() ? sc.variants : c.variants;
  if (v.empty()) throw CLI::ValidationError("--variant", "no variants given and none listed in the config");
  return v;
}

void print_summary(const SimTrace& tr) {
  std::printf("%-15s seed %-4llu %-22s min_B %-12.6g events %-3d time %-4d N %-5zu %.2fs\n", tr.variant.c_str(),
              static_cast<unsigned long long>(tr.seed), tr.termination.c_str(), tr.rows.empty() ? 0.0 : tr.min_b(),
              tr.count(Trigger::event), tr.count(Trigger::time), tr.final_data.size(), tr.runtime);
}

int cmd_run(const Common& c) {
  const Scenario sc = load_scenario(c.config);
  const auto traces = run_many(sc, variants_or_default(c, sc), seeds_or_default(c, sc));
  const std::string dir = out_dir(c, sc);
  for (const auto& tr : traces) {
    write_episode(tr, dir);
    print_summary(tr);
  }
  return 0;
}

int cmd_compare(const Common& c) {
  const Scenario sc = load_scenario(c.config);
  const auto traces = run_many(sc, variants_or_default(c, sc), seeds_or_default(c, sc));
  const std::string dir = out_dir(c, sc);
  for (const auto& tr : traces) write_episode(tr, dir);
  const std::string table = compare_table(compare_rows(traces));
  write_file(fs::path(dir) / "compare.csv", table);
  std::cout << table;
  return 0;
}

int cmd_lambda_map(const Common& c) {
  const Scenario sc = load_scenario(c.config);
  const std::string variant = c.variants.empty() ? "alg1" : c.variants.front();
  const std::uint64_t seed = c.seeds.empty() ? sc.seeds.front() : c.seeds.front();
  const SimTrace tr = run_episode(sc, variant, seed);
  const Dataset empty(sc.kernel_b);
  std::vector<std::pair<std::string, const Dataset*>> data{{"empty", &empty}};
  // Snapshot right after the first event-triggered append, if any.
  Dataset at_event;
  for (const auto& r : tr.rows) {
    if (r.trigger == Trigger::event) {
      at_event = prefix(tr.final_data, r.n);
      data.emplace_back("first_event", &at_event);
      break;
    }
  }
  data.emplace_back("final", &tr.final_data);
  const LambdaMap lm = lambda_map(sc, data);
  const std::string dir = out_dir(c, sc);
  const std::string stem = "lambda_map_" + variant + "_seed" + std::to_string(seed);
  write_file(fs::path(dir) / (stem + ".csv"), lambda_map_csv(lm, sc));
  nlohmann::json j;
  j["variant"] = variant;
  j["seed"] = seed;
  j["termination"] = tr.termination;
  j["cells"] = lm.xs.size() * lm.ys.size();
  for (std::size_t i = 0; i < lm.labels.size(); ++i) j["negative_cells"][lm.labels[i]] = lm.negative_count(i);
  const std::size_t last = lm.labels.size() - 1;
  j["final_contains_empty"] = lm.contains(last, 0);
  write_file(fs::path(dir) / (stem + ".json"), j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_verify(const std::string& suite, int n, std::uint64_t seed, const std::string& input, const std::string& out) {
  VerifyReport rep;
  if (!input.empty()) {
    if (suite != "feasibility") throw CLI::ValidationError("--input", "only the feasibility suite reads instances");
    std::ifstream f(input);
    if (!f) throw std::runtime_error("cannot open " + input);
    rep = verify_feasibility(constraint_data_from_json(nlohmann::json::parse(f)));
  } else {
    rep = verify(suite, n, seed);
  }
  const fs::path dir = out.empty() ? fs::path("out") / "verify" : fs::path(out);
  write_file(dir / (suite + ".csv"), rep.csv);
  write_file(dir / (suite + ".json"), rep.summary.dump(2) + "\n");
  std::cout << rep.summary.dump(2) << "\n";
  return rep.ok() ? 0 : 1;
}

int cmd_warmup(const Common& c) {
  const Scenario sc = load_scenario(c.config);
  const std::uint64_t seed = c.seeds.empty() ? 0 : c.seeds.front();
  const Dataset d = generate_warmup(sc, seed);
  std::string path = c.out.empty() ? sc.prior_path() : c.out;
  if (path.empty()) throw CLI::ValidationError("--out", "no output path and no learner.prior_dataset in the config");
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  save_dataset(d, path);
  std::cout << "wrote " << d.size() << " measurements to " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic safety filter lab: GP-CBF-SOCP with event-triggered learning"};
  app.require_subcommand(1);

  Common c;
  auto add_common = [&c](CLI::App* sub, bool many) {
    sub->add_option("--config", c.config, "scenario file")->required()->check(CLI::ExistingFile);
    if (many) {
      sub->add_option("--variant", c.variants, "controller variant (repeatable)");
      sub->add_option("--seed", c.seeds, "episode seed (repeatable)");
    } else {
      sub->add_option("--variant", c.variants, "controller variant")->expected(1);
      sub->add_option("--seed", c.seeds, "seed")->expected(1);
    }
    sub->add_option("--out", c.out, "output directory");
  };

  auto* run = app.add_subcommand("run", "run episodes and write traces + metrics");
  add_common(run, true);
  auto* compare = app.add_subcommand("compare", "run variants x seeds and summarize safety");
  add_common(compare, true);
  auto* lmap = app.add_subcommand("lambda-map", "lambda_dagger over a 2-D state grid before/after learning");
  add_common(lmap, false);
  auto* warm = app.add_subcommand("warmup", "generate the prior dataset for alg1_prior");
  warm->add_option("--config", c.config, "scenario file")->required()->check(CLI::ExistingFile);
  warm->add_option("--seed", c.seeds, "seed")->expected(1);
  warm->add_option("--out", c.out, "dataset path (default: learner.prior_dataset)");

  auto* ver = app.add_subcommand("verify", "brute-force oracle suites");
  std::string suite;
  int n = 0;
  std::uint64_t vseed = 1;
  std::string input, vout;
  ver->add_option("suite,--suite", suite, "feasibility | solver | gp")
      ->required()
      ->check(CLI::IsMember({"feasibility", "solver", "gp"}));
  ver->add_option("--n", n, "instances (default 500 / 300 / 200)");
  ver->add_option("--seed", vseed, "seed");
  ver->add_option("--input", input, "JSON list of constraint data (feasibility only)")->check(CLI::ExistingFile);
  ver->add_option("--out", vout, "report directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(c);
    if (*compare) return cmd_compare(c);
    if (*lmap) return cmd_lambda_map(c);
    if (*warm) return cmd_warmup(c);
    if (*ver) {
      if (n <= 0) n = suite == "feasibility" ? 500 : (suite == "solver" ? 300 : 200);
      return cmd_verify(suite, n, vseed, input, vout);
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
