#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <vector>

#include "nvb/prior.hpp"
#include "nvb/regression.hpp"

namespace nvb {

/// M_p(u) = -(u'Au - 2z'u) / (2 sigma2) - sum_i G(u_i, d_i). Returns -inf when some G is infinite.
double evaluate_Mp(const Decomposition& dec, const Prior& prior, const Eigen::VectorXd& u);

/// theta_i = (z_i - (A beta)_i) / sigma2.
Eigen::VectorXd local_fields(const Decomposition& dec, const Eigen::VectorXd& beta);

/// b_i = cdot(theta_i(beta), d_i), the coordinate-wise conditional posterior means.
Eigen::VectorXd conditional_means(const Decomposition& dec, const Prior& prior, const Eigen::VectorXd& beta);

/// sup-norm of u - cdot(theta(u), d).
double fixed_point_residual(const Decomposition& dec, const Prior& prior, const Eigen::VectorXd& u);

enum class Schedule {
  /// Coordinate ascent: each u_i is set to its exact conditional maximizer in turn.
  sequential,
  /// u <- (1 - alpha) u + alpha cdot(theta(u), d), alpha halved whenever M_p would decrease.
  damped_parallel,
};

struct OptimizeOptions {
  int restarts = 8;
  double damping = 0.5;
  double tol = 1e-9;
  int max_iter = 10000;
  std::uint64_t seed = 0;
  Schedule schedule = Schedule::sequential;
  std::size_t threads = 1;
  /// Optional extra starting points tried after the zero start.
  std::vector<Eigen::VectorXd> initial_points;
};

struct MeanFieldSolution {
  Eigen::VectorXd u_hat;
  double value = 0.0;
  double fixed_point_residual = 0.0;
  bool converged = false;
  bool restarts_agree = false;
  int iterations = 0;
  /// Largest pairwise sup-distance between converged restart endpoints.
  double restart_spread = 0.0;
  std::vector<double> restart_values;

  nlohmann::json to_json() const;
};

/// Runs one start of the chosen schedule; the zero vector is a valid start.
MeanFieldSolution optimize_from(const Decomposition& dec, const Prior& prior, const Eigen::VectorXd& start,
                                const OptimizeOptions& options);

/// Zero start plus (restarts - 1) random starts in the open cube; best value wins, ties broken
/// by lexicographically smaller u.
MeanFieldSolution optimize(const Decomposition& dec, const Prior& prior, const OptimizeOptions& options = {});

struct ConditionOptions {
  int sign_samples = 64;
  /// Enumerate all sign vectors for the field statistic when p <= 20.
  bool exact_sup_field = false;
  std::uint64_t seed = 0;
};

struct ConditionReport {
  double trA2_over_p = 0.0;
  double row_sum_max = 0.0;
  /// max over sampled sign vectors of sum_i |(A u)_i| / p (a lower estimate of the sup).
  double sup_field_over_p = 0.0;
  bool sup_field_exact = false;
  double min_eig_XtX = 0.0;
  /// Gershgorin lower bound 1 - row_sum_max / sigma2 on the smallest eigenvalue of -H_p.
  double hessian_min_eig_bound = 0.0;
  double ghs_max = 0.0;
  bool ghs_bound_ok = false;
  bool uniqueness_certified = false;

  nlohmann::json to_json() const;
};

/// max over a 50-point log grid d in [0.01, 100] of d * cddot(0, d).
double ghs_statistic(const Prior& prior);

ConditionReport condition_report(const Decomposition& dec, const Prior& prior, const ConditionOptions& options = {});

struct ProbeOptions {
  int n_probes = 32;
  int ascent_steps = 200;
  std::uint64_t seed = 0;
};

/// max of (M_p(u) - M_p(u_star)) / p over random u with |u - u_star|^2 >= p epsilon, each
/// improved by projected gradient ascent that keeps the distance constraint.
double separation_probe(const Decomposition& dec, const Prior& prior, const Eigen::VectorXd& u_star, double epsilon,
                        const ProbeOptions& options = {});

}  // namespace nvb
