#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>

#include "nvb/meanfield.hpp"
#include "nvb/prior.hpp"
#include "nvb/regression.hpp"

namespace nvb {

struct OracleEstimate {
  double log_z = 0.0;
  double std_error = 0.0;
  std::string method;
  long long nodes_or_samples = 0;
  /// Quadrature only: |log Z(nodes) - log Z(nodes / 2)|.
  double refinement_delta = 0.0;
  /// Importance sampling only.
  double effective_sample_size = 0.0;
  bool low_ess_warning = false;

  nlohmann::json to_json() const;
};

inline constexpr int kMaxQuadratureDim = 6;

/// Tensor-product quadrature of Z_p. Each coordinate uses the prior's atoms plus an
/// `nodes_per_dim`-point Gauss-Legendre rule on its density part.
OracleEstimate logz_quadrature(const Decomposition& dec, const Prior& prior, int nodes_per_dim = 24,
                               std::size_t threads = 1);

struct PosteriorMoments {
  double log_z = 0.0;
  Eigen::VectorXd mean;
  /// E[beta beta'].
  Eigen::MatrixXd second;
};

PosteriorMoments posterior_moments_quadrature(const Decomposition& dec, const Prior& prior, int nodes_per_dim = 24);

/// Importance sampling of Z_p from the product measure prod_i pi_(h(u_i, d_i), d_i).
OracleEstimate logz_importance_mc(const Decomposition& dec, const Prior& prior, const MeanFieldSolution& proposal,
                                  std::size_t n_samples, std::uint64_t seed, std::size_t threads = 1);

struct GibbsChain {
  /// One retained draw per row.
  Eigen::MatrixXd samples;
  int burn_in = 0;
  int thinning = 1;
  std::uint64_t seed = 0;
  /// max_i |mean of first half - mean of second half| for coordinate i.
  double split_mean_gap = 0.0;
};

struct GibbsOptions {
  int n_samples = 1000;
  int burn_in = 1000;
  int thin = 10;
  std::uint64_t seed = 0;
  std::optional<Eigen::VectorXd> start;
};

/// Systematic-scan Gibbs sampler: coordinate i is redrawn from pi_(theta_i, d_i).
GibbsChain gibbs_sample(const Decomposition& dec, const Prior& prior, const GibbsOptions& options);

/// One systematic sweep from `beta` in place, drawing with `rng`.
void gibbs_sweep(const Decomposition& dec, const Prior& prior, Eigen::VectorXd& beta, std::mt19937_64& rng);

enum class Zeta { x_times_t, x_squared, x_times_beta0 };

Zeta zeta_from_string(const std::string& name);
std::string to_string(Zeta zeta);

struct LlnResult {
  double posterior_avg = 0.0;
  double predicted_avg = 0.0;
  double diff = 0.0;
  /// Batch-means standard error of the chain average.
  double std_error = 0.0;
};

/// Compares the chain average of (1/p) sum_i zeta(beta_i, i/p) with the mean-field prediction
/// (1/p) sum_i E_{pi_(h(u_i,d_i),d_i)} zeta(., i/p).
LlnResult posterior_lln_check(const GibbsChain& chain, const MeanFieldSolution& solution, const Prior& prior,
                              const Eigen::VectorXd& d, Zeta zeta,
                              const std::optional<Eigen::VectorXd>& beta0 = std::nullopt);

struct BGapResult {
  double mean_Mp_b = 0.0;
  double R_p = 0.0;
  /// (R_p - mean M_p(b)) / p.
  double gap_over_p = 0.0;
  double std_error = 0.0;
};

BGapResult b_gap_check(const GibbsChain& chain, const Decomposition& dec, const Prior& prior,
                       const MeanFieldSolution& solution);

/// M_p(b(beta)) using h(b_i, d_i) = theta_i(beta), which avoids inverting the mean map.
double Mp_at_conditional_means(const Decomposition& dec, const Prior& prior, const Eigen::VectorXd& beta);

/// Standard error of the mean of `x` from `batches` contiguous batch means.
double batch_means_se(const Eigen::VectorXd& x, int batches = 20);

}  // namespace nvb
