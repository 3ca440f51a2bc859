// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "nvb/experiment.hpp"
#include "nvb/limit.hpp"
#include "nvb/meanfield.hpp"
#include "nvb/oracle.hpp"
#include "nvb/prior.hpp"
#include "nvb/regression.hpp"
#include "nvb/rng.hpp"

#ifndef NVB_CLI_PATH
#define NVB_CLI_PATH "nvb"
#endif

namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string fmt(double x, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Every solution produced anywhere in this run, for the stationarity criterion.
std::vector<std::pair<bool, double>> g_solutions;

nvb::MeanFieldSolution solve(const nvb::Decomposition& dec, const nvb::Prior& prior, std::uint64_t seed,
                             int restarts = 8) {
  nvb::OptimizeOptions opt;
  opt.seed = seed;
  opt.restarts = restarts;
  auto sol = nvb::optimize(dec, prior, opt);
  g_solutions.emplace_back(sol.converged, sol.fixed_point_residual);
  return sol;
}

double quartic(double z) { return 2.0 * z * z * z * z; }
double quadratic(double z) { return 1.5 * z * z; }

std::vector<std::pair<std::string, nvb::Prior>> five_priors() {
  return {{"two_point", nvb::Prior::two_point()},
          {"uniform", nvb::Prior::uniform()},
          {"gaussian_trunc", nvb::Prior::from_potential(quadratic)},
          {"quartic", nvb::Prior::from_potential(quartic)},
          {"atom_plus_uniform", nvb::Prior({{0.0, 0.3}, {1.0, 0.1}}, std::vector<double>(1025, 1.0))}};
}

Verdict criterion1() {
  Verdict v;
  double worst1 = 0, worst2 = 0;
  for (const auto& [name, prior] : five_priors()) {
    for (double g1 : {-4.0, -1.0, 0.0, 1.0, 4.0}) {
      for (double g2 : {-2.0, -0.5, 0.0, 1.0, 5.0}) {
        const auto cb = prior.cumulant({g1, g2});
        const double h1 = 1e-4, h2 = 1e-3;
        const double d1 = (prior.cumulant({g1 + h1, g2}).c - prior.cumulant({g1 - h1, g2}).c) / (2 * h1);
        const double d2 =
            (prior.cumulant({g1 + h2, g2}).c - 2 * cb.c + prior.cumulant({g1 - h2, g2}).c) / (h2 * h2);
        worst1 = std::max(worst1, std::abs(cb.cdot - d1));
        worst2 = std::max(worst2, std::abs(cb.cddot - d2));
      }
    }
  }
  double closed = 0;
  const auto tp = nvb::Prior::two_point();
  for (double g1 : {-4.0, -1.0, 0.0, 1.0, 4.0}) {
    for (double g2 : {-2.0, -0.5, 0.0, 1.0, 5.0}) {
      closed = std::max(closed, std::abs(tp.cumulant({g1, g2}).c - (std::log(std::cosh(g1)) - g2 / 2)));
    }
  }
  v.pass = worst1 <= 1e-6 && worst2 <= 1e-4 && closed <= 1e-10;
  v.detail = "max|cdot-FD|=" + fmt(worst1) + " max|cddot-FD2|=" + fmt(worst2) + " closed-form err=" + fmt(closed);
  return v;
}

Verdict criterion2() {
  double worst = 0;
  for (const auto& prior : {nvb::Prior::two_point(), nvb::Prior::uniform()}) {
    for (double t : {0.0, 0.5, -0.5, 0.9, -0.9, 0.999, -0.999}) {
      for (double g2 : {-2.0, 0.0, 5.0}) {
        const double h = prior.invert_mean(t, g2);
        worst = std::max(worst, std::abs(prior.cumulant({h, g2}).cdot - t));
      }
    }
  }
  return {worst <= 1e-10, "max|cdot(h(t))-t|=" + fmt(worst)};
}

Verdict criterion3() {
  double g0 = 0, min_d2 = 1e300, max_dd = 0;
  std::vector<double> us;
  for (int k = -20; k <= 20; ++k) us.push_back(0.99 * k / 20.0);
  const std::vector<double> ds = {0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0};
  for (const auto& [name, prior] : five_priors()) {
    for (double d : ds) {
      if (prior.is_symmetric()) g0 = std::max(g0, std::abs(prior.rate(0.0, d)));
      for (std::size_t k = 1; k + 1 < us.size(); ++k) {
        const double d2 = prior.rate(us[k + 1], d) - 2 * prior.rate(us[k], d) + prior.rate(us[k - 1], d);
        min_d2 = std::min(min_d2, d2);
      }
    }
    for (double u : us) {
      for (std::size_t k = 0; k + 1 < ds.size(); ++k) {
        const double slope = (prior.rate(u, ds[k + 1]) - prior.rate(u, ds[k])) / (ds[k + 1] - ds[k]);
        max_dd = std::max(max_dd, std::abs(slope));
      }
    }
  }
  const bool pass = g0 <= 1e-12 && min_d2 >= -1e-9 && max_dd <= 0.5 + 1e-6;
  return {pass, "max|G(0,d)|=" + fmt(g0) + " min second diff=" + fmt(min_d2) + " max|dG/dd|=" + fmt(max_dd)};
}

Verdict criterion4() {
  nvb::Rng rng(2024, 4);
  const std::vector<nvb::Prior> priors = {nvb::Prior::two_point(), nvb::Prior::uniform(),
                                          nvb::Prior({{0.0, 0.3}}, std::vector<double>(2049, 1.0))};
  double worst = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng.bits() % 5);
    VectorXd diag(p), z(p);
    for (Eigen::Index i = 0; i < p; ++i) {
      diag(i) = rng.uniform(0.2, 3.0);
      z(i) = 1.5 * rng.normal();
    }
    const double sigma2 = rng.uniform(0.5, 2.0);
    const auto dec = nvb::Decomposition::from_gram(MatrixXd(diag.asDiagonal()), z, sigma2);
    const auto& prior = priors[static_cast<std::size_t>(rep) % priors.size()];
    const double lz = nvb::logz_quadrature(dec, prior, 24).log_z;
    const double rp = solve(dec, prior, static_cast<std::uint64_t>(rep)).value;
    worst = std::max(worst, std::abs(lz - rp));
  }
  return {worst <= 1e-8, "max|log Z - R_p| over 50 product posteriors=" + fmt(worst)};
}

nvb::ExperimentConfig config_from(const std::string& text) { return nvb::parse_config(text); }

Verdict criterion5() {
  const auto cfg = config_from(R"({"p": [2], "design": {"kind": "spiked", "spike": 1.0, "n_factor": 20},
                                   "beta0": 0.5, "prior": "two_point"})");
  const auto prior = nvb::Prior::two_point();
  bool bound_ok = true;
  double worst_bound = -1e300;
  std::vector<double> gap5, gap50;
  for (std::size_t p : {2, 3, 4, 5, 20, 50}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto dec = nvb::decompose(nvb::make_instance(cfg, p, seed));
      const auto sol = solve(dec, prior, nvb::derive_seed(seed, 3000 + p));
      nvb::OracleEstimate est = p <= 6 ? nvb::logz_quadrature(dec, prior)
                                       : nvb::logz_importance_mc(dec, prior, sol, 20000, nvb::derive_seed(seed, 5000 + p));
      const double se = p <= 6 ? est.refinement_delta : est.std_error;
      // R_p - 5 SE - log Z must be <= 0 (1e-10 absorbs rounding when SE is exactly 0)
      const double excess = sol.value - 5 * se - est.log_z;
      worst_bound = std::max(worst_bound, excess);
      if (excess > 1e-10) bound_ok = false;
      const double gap = (est.log_z - sol.value) / static_cast<double>(p);
      if (p == 5) gap5.push_back(gap);
      if (p == 50) gap50.push_back(gap);
    }
  }
  const double m5 = median(gap5), m50 = median(gap50);
  return {bound_ok && m50 < m5, "max(R_p-5SE-logZ)=" + fmt(worst_bound) + " median gap/p: p=5 " + fmt(m5, 4) +
                                    ", p=50 " + fmt(m50, 4)};
}

// Symmetric random coupling with max absolute row sum `row_sum`.
nvb::Decomposition coupled_instance(Eigen::Index p, double row_sum, double sigma2, std::uint64_t seed) {
  nvb::Rng rng(seed, 6);
  MatrixXd A = MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i + 1; j < p; ++j) A(i, j) = A(j, i) = rng.normal();
  }
  A *= row_sum / A.cwiseAbs().rowwise().sum().maxCoeff();
  MatrixXd gram = A;
  VectorXd z(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    gram(i, i) = rng.uniform(0.5, 2.0);
    z(i) = 2.0 * rng.normal();
  }
  return nvb::Decomposition::from_gram(gram, z, sigma2);
}

Verdict criterion6_agreement(int& agreeing) {
  agreeing = 0;
  double worst_spread = 0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    const double sigma2 = 0.5 + 0.1 * static_cast<double>(k);
    const auto dec = coupled_instance(30, 0.9 * sigma2, sigma2, k);
    const auto prior = k % 2 ? nvb::Prior::two_point() : nvb::Prior::uniform(257);
    const auto sol = solve(dec, prior, k, 20);
    worst_spread = std::max(worst_spread, sol.restart_spread);
    if (sol.restarts_agree && sol.restart_spread <= 1e-6) ++agreeing;
  }
  return {agreeing == 20, "max restart spread=" + fmt(worst_spread)};
}

Verdict criterion7() {
  const double s1 = nvb::ghs_statistic(nvb::Prior::uniform());
  const double s2 = nvb::ghs_statistic(nvb::Prior::from_potential(quadratic));
  const double s3 = nvb::ghs_statistic(nvb::Prior::from_potential(quartic));
  const double phi1 = std::exp(-0.5) / std::sqrt(2 * M_PI);
  const double Phi1 = 0.5 * std::erfc(-1 / std::sqrt(2.0));
  const double closed = 1 - 2 * phi1 / (2 * Phi1 - 1);
  const double at1 = nvb::Prior::uniform().cumulant({0.0, 1.0}).cddot;
  const bool pass = std::max({s1, s2, s3}) <= 1 + 1e-9 && std::abs(at1 - closed) <= 1e-6;
  return {pass, "sup d*cddot(0,d): uniform " + fmt(s1, 6) + ", gaussian " + fmt(s2, 6) + ", quartic " + fmt(s3, 6) +
                    "; uniform at d=1 " + fmt(at1, 9) + " vs closed form " + fmt(closed, 9)};
}

Verdict criterion8() {
  const auto cfg = config_from(R"({"p": [200], "design": {"kind": "anova"}, "sigma2": 1.0,
                                   "beta0": {"linear": [-0.5, 1.0]}})");
  const auto prior = nvb::Prior::uniform(257);
  int good = 0;
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto dec = nvb::decompose(nvb::make_instance(cfg, 200, seed));
    const auto sol = solve(dec, prior, nvb::derive_seed(seed, 3200));
    nvb::GibbsOptions go;
    go.n_samples = 1000;
    go.burn_in = 200;
    go.thin = 2;
    go.seed = nvb::derive_seed(seed, 6200);
    const auto chain = nvb::gibbs_sample(dec, prior, go);
    const double a = nvb::posterior_lln_check(chain, sol, prior, dec.d, nvb::Zeta::x_times_t).diff;
    const double b = nvb::posterior_lln_check(chain, sol, prior, dec.d, nvb::Zeta::x_squared).diff;
    worst = std::max({worst, a, b});
    if (a <= 0.02 && b <= 0.02) ++good;
  }

  // Small instances against quadrature posterior moments.
  int within = 0, total = 0;
  double worst_z = 0;
  std::vector<nvb::Decomposition> small = {nvb::decompose(nvb::make_instance(cfg, 2, 11)),
                                           coupled_instance(3, 0.8, 1.0, 99)};
  for (std::size_t k = 0; k < small.size(); ++k) {
    const auto& dec = small[k];
    const auto mom = nvb::posterior_moments_quadrature(dec, prior, 24);
    nvb::GibbsOptions go;
    go.n_samples = 20000;
    go.burn_in = 500;
    go.thin = 1;
    go.seed = 8000 + k;
    const auto chain = nvb::gibbs_sample(dec, prior, go);
    for (Eigen::Index i = 0; i < dec.dim(); ++i) {
      const VectorXd x = chain.samples.col(i);
      const VectorXd x2 = x.array().square();
      for (auto [series, target] : {std::pair{x, mom.mean(i)}, std::pair{x2, mom.second(i, i)}}) {
        const double zscore = std::abs(series.mean() - target) / nvb::batch_means_se(series);
        worst_z = std::max(worst_z, zscore);
        within += zscore <= 4.0;
        ++total;
      }
    }
  }
  const bool pass = good >= 9 && within == total;
  return {pass, std::to_string(good) + "/10 seeds within 0.02 at p=200 (max diff " + fmt(worst) + "); " +
                    std::to_string(within) + "/" + std::to_string(total) + " small-p moments within 4 SE (max " +
                    fmt(worst_z) + ")"};
}

Verdict criterion9() {
  // n = p^2 so that p = o(n) holds along the sequence.
  const auto cfg = config_from(R"({"p": [50], "design": {"kind": "spiked", "spike": 1.0, "n_factor": 1, "n_power": 2},
                                   "beta0": 0.5})");
  const auto prior = nvb::Prior::uniform(257);
  int decreasing = 0;
  double min_gap = 1e300;
  std::ostringstream medians;
  std::vector<std::vector<double>> gaps(3);
  const std::size_t ps[] = {50, 100, 200};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    double prev = 1e300;
    bool dec_ok = true;
    for (std::size_t k = 0; k < 3; ++k) {
      const std::size_t p = ps[k];
      const auto dec = nvb::decompose(nvb::make_instance(cfg, p, seed));
      const auto sol = solve(dec, prior, nvb::derive_seed(seed, 3000 + p));
      nvb::GibbsOptions go;
      go.n_samples = 400;
      go.burn_in = 200;
      go.thin = 2;
      go.seed = nvb::derive_seed(seed, 6000 + p);
      const auto chain = nvb::gibbs_sample(dec, prior, go);
      const double gap = nvb::b_gap_check(chain, dec, prior, sol).gap_over_p;
      gaps[k].push_back(gap);
      min_gap = std::min(min_gap, gap);
      if (!(gap < prev)) dec_ok = false;
      prev = gap;
    }
    decreasing += dec_ok;
  }
  const bool pass = min_gap >= -1e-9 && decreasing >= 8;
  return {pass, std::to_string(decreasing) + "/10 seeds decreasing; min gap/p=" + fmt(min_gap) +
                    "; median gap/p at p=50,100,200: " + fmt(median(gaps[0])) + ", " + fmt(median(gaps[1])) + ", " +
                    fmt(median(gaps[2]))};
}

Verdict criterion10() {
  const auto cfg = config_from(R"({"p": [100, 400], "design": {"kind": "anova"}, "sigma2": 1.0, "beta0": 0.0,
                                   "prior": {"kind": "uniform", "grid": 257}, "limit": {"m": 64, "q": 33}})");
  const auto prior = nvb::make_prior(cfg.prior_spec);
  const auto lp = nvb::limit_problem_for(cfg, prior);
  nvb::RdeOptions ro = cfg.rde;
  ro.seed = 7000;
  const auto rde = nvb::solve_rde(lp, ro);
  int improved = 0;
  double worst400 = 0;
  std::vector<double> e100, e400;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    double err[2];
    for (int k = 0; k < 2; ++k) {
      const std::size_t p = k ? 400 : 100;
      const auto dec = nvb::decompose(nvb::make_instance(cfg, p, seed));
      const auto sol = solve(dec, prior, nvb::derive_seed(seed, 3000 + p));
      err[k] = std::abs(sol.value / static_cast<double>(p) - rde.value);
    }
    e100.push_back(err[0]);
    e400.push_back(err[1]);
    improved += err[1] < err[0];
    worst400 = std::max(worst400, err[1]);
  }
  const bool pass = improved >= 8 && worst400 <= 0.05;
  return {pass, std::to_string(improved) + "/10 seeds closer at p=400; G(F*)=" + fmt(rde.value, 6) +
                    "; median |R_p/p - G(F*)|: p=100 " + fmt(median(e100)) + ", p=400 " + fmt(median(e400)) +
                    "; max at p=400 " + fmt(worst400)};
}

Verdict criterion11() {
  std::vector<nvb::LimitProblem> problems;
  const Eigen::Index m = 32;
  problems.push_back(nvb::build_limit_problem(nvb::LimitKind::anova, {}, nvb::StepFunction::constant(m, 0.3), 1.0,
                                              nvb::Prior::uniform(257), m));
  problems.push_back(nvb::build_limit_problem(nvb::LimitKind::anova, {}, nvb::StepFunction::constant(m, 0.0), 1.0,
                                              nvb::Prior::two_point(), m));
  nvb::LimitParams sp;
  sp.spike = nvb::Profile1D::linear(0.5, 1.0);
  problems.push_back(nvb::build_limit_problem(nvb::LimitKind::spiked, sp,
                                              nvb::StepFunction::from_profile(nvb::Profile1D::linear(-0.5, 1.0), m),
                                              0.8, nvb::Prior::uniform(257), m));
  nvb::LimitParams sb;
  sb.intensity = nvb::Profile2D::constant(2.0);
  problems.push_back(nvb::build_limit_problem(nvb::LimitKind::sparse_bernoulli, sb, nvb::StepFunction::constant(m, 0.5),
                                              1.0, nvb::Prior::from_potential(quadratic, 257), m));
  double worst_res = 0;
  int beaten = 0;
  bool converged = true;
  for (std::size_t k = 0; k < problems.size(); ++k) {
    const auto& lp = problems[k];
    nvb::RdeOptions ro;
    ro.seed = 11 + k;
    const auto sol = nvb::solve_rde(lp, ro);
    converged = converged && sol.converged;
    worst_res = std::max(worst_res, (nvb::rde_map(lp, sol.F).values - sol.F.values).cwiseAbs().maxCoeff());
    nvb::Rng rng(k, 11);
    for (int rep = 0; rep < 100; ++rep) {
      nvb::GridFunction F{MatrixXd(lp.m(), lp.q())};
      if (rep % 2 == 0) {
        const double scale = rng.uniform(0.05, 0.99);
        for (Eigen::Index i = 0; i < F.values.size(); ++i) F.values.data()[i] = scale * rng.uniform(-1, 1);
      } else {
        const double eps = std::pow(10.0, rng.uniform(-6, -1));
        for (Eigen::Index i = 0; i < F.values.size(); ++i) {
          F.values.data()[i] = std::clamp(sol.F.values.data()[i] + eps * rng.uniform(-1, 1), -0.999999, 0.999999);
        }
      }
      if (nvb::evaluate_functional(lp, F) > sol.value) ++beaten;
    }
  }

  // W = 0: the fixed point is T applied once.
  const Eigen::Index m0 = 8;
  const auto prior = nvb::Prior::uniform(513);
  nvb::StepFunction g{VectorXd::LinSpaced(m0, -1.0, 1.0)};
  nvb::StepFunction psi{VectorXd::LinSpaced(m0, 0.1, 2.0)};
  const auto lp0 = nvb::make_limit_problem({MatrixXd::Zero(m0, m0), true}, g, psi, 1.3, prior, 21);
  const auto sol0 = nvb::solve_rde(lp0);
  double err0 = 0;
  for (Eigen::Index a = 0; a < m0; ++a) {
    for (Eigen::Index b = 0; b < lp0.q(); ++b) {
      const double theta = (g(a) + std::sqrt(psi(a)) * lp0.gh.nodes[static_cast<std::size_t>(b)]) / 1.3;
      err0 = std::max(err0, std::abs(sol0.F.values(a, b) - prior.cumulant({theta, psi(a) / 1.3}).cdot));
    }
  }
  const bool pass = converged && worst_res <= 1e-8 && err0 <= 1e-12 && beaten == 0;
  return {pass, "max residual=" + fmt(worst_res) + "; W=0 error=" + fmt(err0) + "; random F beating F*: " +
                    std::to_string(beaten) + "/400"};
}

Verdict criterion12() {
  int violations = 0, kernels = 0;
  for (Eigen::Index m = 1; m <= 12; ++m) {
    for (std::uint64_t rep = 0; rep < 5; ++rep) {
      nvb::Rng rng(static_cast<std::uint64_t>(m) * 100 + rep, 12);
      MatrixXd B(m, m);
      for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = i; j < m; ++j) B(i, j) = B(j, i) = rng.normal() + (rep % 2 ? 0.5 : 0.0);
      }
      const nvb::StepKernel K{B, false};
      violations += nvb::cut_norm(K, nvb::CutMode::heuristic, rep) > nvb::cut_norm(K, nvb::CutMode::exact) + 1e-15;
      ++kernels;
    }
  }
  const double zero = nvb::cut_norm({MatrixXd::Zero(9, 9), false}, nvb::CutMode::exact);
  const double c = 0.731;
  const double cst = nvb::cut_norm({MatrixXd::Constant(12, 12, c), false}, nvb::CutMode::exact);
  const bool pass = violations == 0 && zero == 0.0 && std::abs(cst - c) <= 1e-12;
  return {pass, std::to_string(violations) + "/" + std::to_string(kernels) +
                    " kernels with heuristic > exact; exact(0)=" + fmt(zero) + "; |exact(c)-c|=" +
                    fmt(std::abs(cst - c))};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict criterion13() {
  const fs::path dir = fs::temp_directory_path() / "nvb_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << R"({
  "design": {"kind": "anova"},
  "prior": {"kind": "uniform", "grid": 129},
  "beta0": {"linear": [-0.5, 1.0]},
  "p": [4, 8],
  "seeds": [5, 6],
  "checks": ["conditions", "gap", "lln", "bgap", "limit-compare"],
  "oracle": {"nodes_per_dim": 12, "mc_samples": 2000},
  "gibbs": {"n_samples": 200, "burn_in": 50, "thin": 1},
  "limit": {"m": 16, "q": 15}
})";
  const std::string cli = NVB_CLI_PATH;
  int codes[2];
  for (int k = 0; k < 2; ++k) {
    const std::string cmd = "\"" + cli + "\" run --config \"" + (dir / "config.json").string() + "\" --out \"" +
                            (dir / ("out" + std::to_string(k))).string() + "\" --threads " + std::to_string(k + 1) +
                            " > /dev/null 2>&1";
    codes[k] = std::system(cmd.c_str());
  }
  if (codes[0] != 0 || codes[1] != 0) {
    return {false, "run exited with " + std::to_string(codes[0]) + ", " + std::to_string(codes[1])};
  }
  int compared = 0, differ = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir / "out0")) {
    if (!entry.is_regular_file() || entry.path().filename() == "timings.csv") continue;
    const fs::path rel = fs::relative(entry.path(), dir / "out0");
    ++compared;
    differ += slurp(entry.path()) != slurp(dir / "out1" / rel);
  }
  return {compared >= 3 && differ == 0,
          std::to_string(compared) + " output files compared (1 vs 2 threads), " + std::to_string(differ) + " differ"};
}

}  // namespace

int main() {
  std::vector<std::pair<int, std::function<Verdict()>>> criteria = {
      {1, criterion1},   {2, criterion2},   {3, criterion3},   {4, criterion4},   {5, criterion5},
      {7, criterion7},   {8, criterion8},   {9, criterion9},   {10, criterion10}, {11, criterion11},
      {12, criterion12}, {13, criterion13},
  };
  std::vector<std::pair<Verdict, double>> results(14);
  for (auto& [id, fn] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    results[static_cast<std::size_t>(id)] = {v, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    std::cerr << "criterion " << id << " done in " << fmt(results[static_cast<std::size_t>(id)].second) << " s\n";
  }
  {
    // Runs last so that it also covers every solution produced above.
    const auto t0 = std::chrono::steady_clock::now();
    int agreeing = 0;
    Verdict v = criterion6_agreement(agreeing);
    int converged = 0, bad = 0;
    double worst = 0;
    for (const auto& [conv, res] : g_solutions) {
      if (!conv) continue;
      ++converged;
      worst = std::max(worst, res);
      bad += res > 1e-9;
    }
    v.pass = v.pass && bad == 0;
    v.detail = std::to_string(converged) + " converged solutions, max residual " + fmt(worst) + "; " +
               std::to_string(agreeing) + "/20 weakly coupled instances with all 20 restarts agreeing (" + v.detail +
               ")";
    results[6] = {v, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
  }

  int failed = 0;
  for (int id = 1; id <= 13; ++id) {
    const auto& [v, secs] = results[static_cast<std::size_t>(id)];
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << v.detail << " [" << fmt(secs) << " s]\n";
    failed += !v.pass;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : "acceptance: all criteria passed")
            << '\n';
  return failed ? 1 : 0;
}
