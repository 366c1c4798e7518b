#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "safecbf/cone_solver.hpp"
#include "safecbf/feasibility.hpp"

namespace safecbf {

/// Outcome of one brute-force suite. `csv` holds one row per instance.
struct VerifyReport {
  std::string suite;
  int instances = 0;
  int checked = 0;   // instances outside the exclusion band
  int failures = 0;
  double runtime = 0.0;
  std::string csv;
  nlohmann::json summary;

  bool ok() const { return failures == 0; }
};

// Tolerance bands.
constexpr double kOracleBand = 1e-6;     // feasibility: |normalized oracle margin| below this is excluded
constexpr double kHTol = 1e-8;           // H-matrix checks on witnesses / solutions
constexpr double kObjectiveTol = 1e-3;   // solver vs oracle objective
constexpr double kConstraintTol = 1e-8;  // solver constraint violation
constexpr double kGpTol = 1e-8;          // incremental vs batch, relative
constexpr double kStructureTol = 1e-10;  // affine mean / quadratic variance fit residual

/// H-matrix cross-check of a candidate input: [1 u] H [1 u]^T <= tol and
/// lg_hat u + lf_hat + gamma_b >= -tol.
bool h_check(const ConstraintData& cd, const VectorXd& u, double* quad = nullptr, double* lin = nullptr);

/// Grid oracle for satisfiability: maximum over a compactified grid (plus local
/// zoom) of margin(u) / (1 + ||u||). The value at ||u|| = inf is the limit.
double feasibility_oracle(const ConstraintData& cd);

/// Grid + log-barrier oracle for bounded SOCPs with a strictly feasible grid point.
/// Returns the optimal objective and writes the minimizer to `w`.
double socp_oracle(const SocpProblem& p, double box, VectorXd* w = nullptr);

ConstraintData random_constraint_data(std::mt19937_64& rng, int m);
/// Feasible and bounded: every instance carries a cone ||w|| <= box.
SocpProblem random_socp(std::mt19937_64& rng, int dim, double box);

VerifyReport verify_feasibility(const std::vector<ConstraintData>& instances);
VerifyReport verify_feasibility(int n, std::uint64_t seed);
VerifyReport verify_solver(int n, std::uint64_t seed);
VerifyReport verify_gp(int n, std::uint64_t seed);
VerifyReport verify(std::string_view suite, int n, std::uint64_t seed);

/// {"lf_hat", "lg_hat", "cov", "gamma_b", "beta"} per instance.
std::vector<ConstraintData> constraint_data_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ConstraintData& cd);

}  // namespace safecbf
