#include "nvb/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "nvb/errors.hpp"
#include "nvb/parallel.hpp"
#include "nvb/quadrature.hpp"
#include "nvb/rng.hpp"

namespace nvb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Rule1D {
  std::vector<double> x;
  std::vector<double> logw;
};

// Atoms plus Gauss-Legendre nodes on the linear interpolant of the density, weighted by
// pi_(0, d) so that the diagonal term of the quadratic form is absorbed.
Rule1D coordinate_rule(const Prior& prior, double d, int n) {
  Rule1D rule;
  for (const auto& a : prior.atoms()) {
    if (a.weight > 0.0) {
      rule.x.push_back(a.location);
      rule.logw.push_back(std::log(a.weight));
    }
  }
  const auto& f = prior.density();
  if (!f.empty()) {
    const QuadratureRule gl = gauss_legendre(static_cast<std::size_t>(n));
    const double h = prior.grid_step();
    for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
      const double x = gl.nodes[k];
      const double pos = std::clamp((x + 1.0) / h, 0.0, static_cast<double>(f.size() - 1));
      const auto cell = std::min(static_cast<std::size_t>(pos), f.size() - 2);
      const double frac = pos - static_cast<double>(cell);
      const double dens = (1.0 - frac) * f[cell] + frac * f[cell + 1];
      if (dens > 0.0) {
        rule.x.push_back(x);
        rule.logw.push_back(std::log(gl.weights[k] * dens));
      }
    }
  }
  for (std::size_t k = 0; k < rule.x.size(); ++k) rule.logw[k] -= 0.5 * d * rule.x[k] * rule.x[k];
  const double c0 = log_sum_exp(rule.logw);
  for (double& lw : rule.logw) lw -= c0;
  return rule;
}

std::vector<Rule1D> coordinate_rules(const Decomposition& dec, const Prior& prior, int n) {
  std::vector<Rule1D> rules;
  for (Eigen::Index i = 0; i < dec.dim(); ++i) rules.push_back(coordinate_rule(prior, dec.d(i), n));
  return rules;
}

// Depth-first walk over the tensor grid. `leaf(exponent, beta)` receives the log integrand
// (including log weights) at every grid point whose first coordinate is rules[0].x[first].
template <class Leaf>
void walk(const std::vector<Rule1D>& rules, const Decomposition& dec, std::size_t first, Leaf& leaf) {
  const auto p = static_cast<Eigen::Index>(rules.size());
  const double inv_s2 = 1.0 / dec.sigma2;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  std::vector<double> partial(static_cast<std::size_t>(p) + 1, 0.0);
  auto rec = [&](auto&& self, Eigen::Index k) -> void {
    if (k == p) {
      leaf(partial[static_cast<std::size_t>(p)], beta);
      return;
    }
    double coupling = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) coupling += dec.A(k, j) * beta(j);
    const double lin = dec.z(k) * inv_s2 - coupling * inv_s2;
    const Rule1D& r = rules[static_cast<std::size_t>(k)];
    const std::size_t lo = k == 0 ? first : 0;
    const std::size_t hi = k == 0 ? first + 1 : r.x.size();
    for (std::size_t a = lo; a < hi; ++a) {
      beta(k) = r.x[a];
      partial[static_cast<std::size_t>(k) + 1] = partial[static_cast<std::size_t>(k)] + r.logw[a] + lin * r.x[a];
      self(self, k + 1);
    }
  };
  rec(rec, 0);
}

void check_quadrature_input(const Decomposition& dec, int nodes_per_dim) {
  if (dec.dim() > kMaxQuadratureDim) {
    throw SizeError("quadrature oracle supports p <= " + std::to_string(kMaxQuadratureDim));
  }
  if (dec.dim() < 1) throw InvalidInput("quadrature oracle needs p >= 1");
  if (nodes_per_dim < 1) throw InvalidInput("nodes_per_dim must be >= 1");
}

double quadrature_logz(const Decomposition& dec, const Prior& prior, int n, std::size_t threads,
                       long long* node_count) {
  const auto rules = coordinate_rules(dec, prior, n);
  const std::size_t outer = rules[0].x.size();
  std::vector<LogSumExp> parts(outer);
  parallel_for(outer, threads, [&](std::size_t a) {
    LogSumExp acc;
    auto leaf = [&acc](double e, const Eigen::VectorXd&) { acc.add(e); };
    walk(rules, dec, a, leaf);
    parts[a] = acc;
  });
  LogSumExp total;
  for (const auto& part : parts) {
    if (!part.empty()) total.add(part.value());
  }
  if (node_count) {
    long long count = 1;
    for (const auto& r : rules) count *= static_cast<long long>(r.x.size());
    *node_count = count;
  }
  return total.value();
}

}  // namespace

nlohmann::json OracleEstimate::to_json() const {
  nlohmann::json j = {{"log_z", log_z}, {"std_error", std_error}, {"method", method}, {"n", nodes_or_samples}};
  if (method == "quadrature") j["refinement_delta"] = refinement_delta;
  if (method == "importance_mc") {
    j["ess"] = effective_sample_size;
    j["low_ess_warning"] = low_ess_warning;
  }
  return j;
}

OracleEstimate logz_quadrature(const Decomposition& dec, const Prior& prior, int nodes_per_dim, std::size_t threads) {
  check_quadrature_input(dec, nodes_per_dim);
  OracleEstimate est;
  est.method = "quadrature";
  est.log_z = quadrature_logz(dec, prior, nodes_per_dim, threads, &est.nodes_or_samples);
  const int coarse = std::max(1, nodes_per_dim / 2);
  if (prior.density().empty()) {
    est.refinement_delta = 0.0;
  } else {
    est.refinement_delta = std::abs(est.log_z - quadrature_logz(dec, prior, coarse, threads, nullptr));
  }
  return est;
}

PosteriorMoments posterior_moments_quadrature(const Decomposition& dec, const Prior& prior, int nodes_per_dim) {
  check_quadrature_input(dec, nodes_per_dim);
  const auto rules = coordinate_rules(dec, prior, nodes_per_dim);
  const Eigen::Index p = dec.dim();
  PosteriorMoments out;
  out.log_z = quadrature_logz(dec, prior, nodes_per_dim, 1, nullptr);
  out.mean = Eigen::VectorXd::Zero(p);
  out.second = Eigen::MatrixXd::Zero(p, p);
  auto leaf = [&](double e, const Eigen::VectorXd& beta) {
    const double w = std::exp(e - out.log_z);
    out.mean += w * beta;
    out.second += w * beta * beta.transpose();
  };
  for (std::size_t a = 0; a < rules[0].x.size(); ++a) walk(rules, dec, a, leaf);
  return out;
}

double batch_means_se(const Eigen::VectorXd& x, int batches) {
  const Eigen::Index n = x.size();
  if (n < 2) return 0.0;
  const Eigen::Index b = std::min<Eigen::Index>(batches, n);
  const Eigen::Index len = n / b;
  Eigen::VectorXd means(b);
  for (Eigen::Index k = 0; k < b; ++k) means(k) = x.segment(k * len, len).mean();
  const double mu = means.mean();
  const double var = (means.array() - mu).square().sum() / static_cast<double>(b - 1);
  return std::sqrt(var / static_cast<double>(b));
}

OracleEstimate logz_importance_mc(const Decomposition& dec, const Prior& prior, const MeanFieldSolution& proposal,
                                  std::size_t n_samples, std::uint64_t seed, std::size_t threads) {
  const Eigen::Index p = dec.dim();
  if (proposal.u_hat.size() != p) throw InvalidInput("importance_mc: proposal dimension mismatch");
  if (n_samples < 2) throw InvalidInput("importance_mc: need at least 2 samples");
  Eigen::VectorXd h(p);
  double shift = 0.0;
  std::vector<TiltedSampler> samplers;
  samplers.reserve(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < p; ++i) {
    h(i) = prior.invert_mean(proposal.u_hat(i), dec.d(i));
    shift += prior.cumulant({h(i), dec.d(i)}).c - prior.cumulant({0.0, dec.d(i)}).c;
    samplers.push_back(prior.sampler({h(i), dec.d(i)}));
  }
  const Eigen::VectorXd lin = dec.z / dec.sigma2 - h;

  constexpr std::size_t kBatches = 20;
  const std::size_t per = (n_samples + kBatches - 1) / kBatches;
  Eigen::VectorXd logw(static_cast<Eigen::Index>(per * kBatches));
  parallel_for(kBatches, threads, [&](std::size_t b) {
    Rng rng(seed, 50 + b);
    Eigen::VectorXd beta(p);
    for (std::size_t s = 0; s < per; ++s) {
      for (Eigen::Index i = 0; i < p; ++i) beta(i) = samplers[static_cast<std::size_t>(i)](rng.engine());
      logw(static_cast<Eigen::Index>(b * per + s)) =
          -beta.dot(dec.A * beta) / (2.0 * dec.sigma2) + lin.dot(beta) + shift;
    }
  });

  const double m = logw.maxCoeff();
  const Eigen::VectorXd w = (logw.array() - m).exp().matrix();
  const double mean_w = w.mean();
  OracleEstimate est;
  est.method = "importance_mc";
  est.nodes_or_samples = logw.size();
  est.log_z = m + std::log(mean_w);
  // Delta method on the batch means of the rescaled weights.
  est.std_error = batch_means_se(w, static_cast<int>(kBatches)) / mean_w;
  est.effective_sample_size = w.sum() * w.sum() / w.squaredNorm();
  est.low_ess_warning = est.effective_sample_size < 10.0;
  return est;
}

void gibbs_sweep(const Decomposition& dec, const Prior& prior, Eigen::VectorXd& beta, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Eigen::Index p = dec.dim();
  for (Eigen::Index i = 0; i < p; ++i) {
    const double m = dec.A.col(i).dot(beta);
    const double theta = (dec.z(i) - m) / dec.sigma2;
    const TiltedSampler s = prior.sampler({theta, dec.d(i)});
    const double u1 = unif(rng);
    const double u2 = unif(rng);
    beta(i) = s.draw(u1, u2);
  }
}

GibbsChain gibbs_sample(const Decomposition& dec, const Prior& prior, const GibbsOptions& options) {
  if (options.n_samples < 1 || options.burn_in < 0 || options.thin < 1) {
    throw InvalidInput("gibbs: n_samples >= 1, burn_in >= 0, thin >= 1 required");
  }
  const Eigen::Index p = dec.dim();
  Eigen::VectorXd beta = options.start ? *options.start : Eigen::VectorXd::Zero(p);
  if (beta.size() != p) throw InvalidInput("gibbs: start dimension mismatch");
  std::mt19937_64 rng(derive_seed(options.seed, 77));
  for (int s = 0; s < options.burn_in; ++s) gibbs_sweep(dec, prior, beta, rng);
  GibbsChain chain;
  chain.samples.resize(options.n_samples, p);
  chain.burn_in = options.burn_in;
  chain.thinning = options.thin;
  chain.seed = options.seed;
  for (int k = 0; k < options.n_samples; ++k) {
    for (int t = 0; t < options.thin; ++t) gibbs_sweep(dec, prior, beta, rng);
    chain.samples.row(k) = beta.transpose();
  }
  const int half = options.n_samples / 2;
  if (half >= 1) {
    const Eigen::VectorXd first = chain.samples.topRows(half).colwise().mean().transpose();
    const Eigen::VectorXd second = chain.samples.bottomRows(half).colwise().mean().transpose();
    chain.split_mean_gap = (first - second).lpNorm<Eigen::Infinity>();
  }
  return chain;
}

Zeta zeta_from_string(const std::string& name) {
  if (name == "x*t") return Zeta::x_times_t;
  if (name == "x^2" || name == "x2") return Zeta::x_squared;
  if (name == "x*beta0") return Zeta::x_times_beta0;
  throw InvalidInput("unknown zeta: " + name);
}

std::string to_string(Zeta zeta) {
  switch (zeta) {
    case Zeta::x_times_t:
      return "x*t";
    case Zeta::x_squared:
      return "x^2";
    case Zeta::x_times_beta0:
      return "x*beta0";
  }
  return "x*t";
}

LlnResult posterior_lln_check(const GibbsChain& chain, const MeanFieldSolution& solution, const Prior& prior,
                              const Eigen::VectorXd& d, Zeta zeta, const std::optional<Eigen::VectorXd>& beta0) {
  const Eigen::Index p = chain.samples.cols();
  if (solution.u_hat.size() != p || d.size() != p) throw InvalidInput("lln check: dimension mismatch");
  if (zeta == Zeta::x_times_beta0 && (!beta0 || beta0->size() != p)) {
    throw InvalidInput("lln check: zeta x*beta0 needs beta0 of length p");
  }
  const double pd = static_cast<double>(p);
  // Per-coordinate weight for the linear zetas.
  Eigen::VectorXd coef(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    coef(i) = zeta == Zeta::x_times_t ? static_cast<double>(i + 1) / pd : zeta == Zeta::x_times_beta0 ? (*beta0)(i) : 0.0;
  }
  Eigen::VectorXd per_sample(chain.samples.rows());
  for (Eigen::Index s = 0; s < chain.samples.rows(); ++s) {
    const auto row = chain.samples.row(s);
    per_sample(s) = zeta == Zeta::x_squared ? row.squaredNorm() / pd : row.dot(coef) / pd;
  }
  double predicted = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    predicted += zeta == Zeta::x_squared ? prior.tilted_moment(solution.u_hat(i), d(i), 2) : solution.u_hat(i) * coef(i);
  }
  LlnResult out;
  out.posterior_avg = per_sample.mean();
  out.predicted_avg = predicted / pd;
  out.diff = std::abs(out.posterior_avg - out.predicted_avg);
  out.std_error = batch_means_se(per_sample);
  return out;
}

double Mp_at_conditional_means(const Decomposition& dec, const Prior& prior, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd theta = local_fields(dec, beta);
  const Eigen::Index p = dec.dim();
  Eigen::VectorXd b(p);
  double entropy = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    const CumulantBundle cb = prior.cumulant({theta(i), dec.d(i)});
    b(i) = cb.cdot;
    entropy += cb.cdot * theta(i) - cb.c + prior.cumulant({0.0, dec.d(i)}).c;
  }
  return -(b.dot(dec.A * b) - 2.0 * dec.z.dot(b)) / (2.0 * dec.sigma2) - entropy;
}

BGapResult b_gap_check(const GibbsChain& chain, const Decomposition& dec, const Prior& prior,
                       const MeanFieldSolution& solution) {
  const Eigen::Index p = dec.dim();
  if (chain.samples.cols() != p || solution.u_hat.size() != p) throw InvalidInput("b gap: dimension mismatch");
  Eigen::VectorXd values(chain.samples.rows());
  for (Eigen::Index s = 0; s < chain.samples.rows(); ++s) {
    values(s) = Mp_at_conditional_means(dec, prior, chain.samples.row(s).transpose());
  }
  BGapResult out;
  out.mean_Mp_b = values.mean();
  out.R_p = solution.value;
  out.gap_over_p = (out.R_p - out.mean_Mp_b) / static_cast<double>(p);
  out.std_error = batch_means_se(values) / static_cast<double>(p);
  return out;
}

}  // namespace nvb
