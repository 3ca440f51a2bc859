#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nvb/limit.hpp"
#include "nvb/meanfield.hpp"
#include "nvb/oracle.hpp"
#include "nvb/prior.hpp"
#include "nvb/profile.hpp"
#include "nvb/regression.hpp"

namespace nvb {

/// Bad experiment configuration; `line()` points into the config text (0 if unknown).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct ExperimentConfig {
  std::string design_kind = "anova";
  /// Rows n = ceil(n_factor * p^n_power); defaults depend on the design kind.
  double n_factor = 20.0;
  double n_power = 1.0;
  Profile1D spike = Profile1D::constant(0.0);
  Profile2D intensity = Profile2D::constant(0.0);
  std::string explicit_X_path;
  nlohmann::json prior_spec = "two_point";
  double sigma2 = 1.0;
  /// beta0_i = phi(i / p).
  Profile1D phi = Profile1D::constant(0.0);
  std::vector<std::size_t> p_list;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> checks;

  OptimizeOptions optimizer;
  int nodes_per_dim = 24;
  std::size_t mc_samples = 20000;
  GibbsOptions gibbs;
  Eigen::Index limit_m = 64;
  Eigen::Index limit_q = 33;
  RdeOptions rde;
  std::string output_dir = "out";

  bool has_check(const std::string& name) const;
};

/// Parses and validates a JSON config; errors carry the line of the offending key.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// "two_point", "uniform", {"kind": "uniform", "grid": N},
/// {"kind": "potential", "coef": a, "exponent": k, "grid": N} for V(x) = a |x|^k, or a serialized prior.
Prior make_prior(const nlohmann::json& spec);

std::size_t rows_for(const ExperimentConfig& config, std::size_t p);
Eigen::VectorXd beta0_for(const ExperimentConfig& config, std::size_t p);
/// Design plus response for cell (p, seed).
RegressionInstance make_instance(const ExperimentConfig& config, std::size_t p, std::uint64_t seed);

/// xi_i = (z_i - (X'X beta0)_i) / sqrt(D_ii).
Eigen::VectorXd noise_scores(const Decomposition& dec, const Eigen::VectorXd& beta0);

LimitProblem limit_problem_for(const ExperimentConfig& config, const Prior& prior);

struct ResultRow {
  std::size_t p = 0;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  double R_p_over_p = 0.0;
  double residual = 0.0;
  bool converged = false;
  bool restarts_agree = false;
  std::optional<double> log_z;
  std::optional<double> log_z_se;
  std::string log_z_method;
  std::optional<double> gap_over_p;
  std::optional<ConditionReport> conditions;
  std::optional<double> lln_diff_xt;
  std::optional<double> lln_diff_x2;
  std::optional<double> lln_diff_xbeta0;
  std::optional<double> b_gap_over_p;
  std::optional<double> limit_value;
  std::optional<double> limit_discrepancy;
  double runtime_seconds = 0.0;
  std::vector<std::string> violations;
};

ResultRow run_cell(const ExperimentConfig& config, const Prior& prior, std::size_t p, std::uint64_t seed,
                   const std::optional<RdeSolution>& limit_solution, const std::optional<LimitProblem>& limit_problem);

/// Header and rows of results.csv (doubles at 17 significant digits, empty cells when a check was not run).
std::string results_csv_header();
std::string results_csv_line(const ResultRow& row);

/// Writes results.csv, summary.json, timings.csv and plotdata/*.csv. Returns 0, or 2 if any
/// invariant was violated.
int run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::size_t threads,
                   std::ostream& log);

/// a_p = R_p / p per (p, seed) against the limit value; writes compare_limit.json and
/// plotdata/ap_vs_limit.csv. Returns 0 (trend violations are flagged in the report), 1 when the
/// design has no known limit.
int compare_finite_vs_limit(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::size_t threads,
                            std::ostream& log);

std::string format_double(double x);

}  // namespace nvb
