#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "nvb/errors.hpp"
#include "nvb/experiment.hpp"
#include "nvb/parallel.hpp"
#include "nvb/rng.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "base seed; overrides the config");
  cmd->add_option("--out", args.out, "output directory; overrides the config");
  cmd->add_option("--threads", args.threads, "worker threads (default: NVB_THREADS, then 1)");
}

struct Context {
  nvb::ExperimentConfig config;
  std::filesystem::path out;
  std::size_t threads;
};

Context prepare(const CommonArgs& args) {
  Context ctx{nvb::load_config(args.config), {}, nvb::resolve_threads(args.threads)};
  if (args.seed) {
    const std::size_t count = ctx.config.seeds.size();
    ctx.config.seeds.clear();
    for (std::size_t k = 0; k < count; ++k) ctx.config.seeds.push_back(*args.seed + k);
  }
  ctx.out = args.out.empty() ? std::filesystem::path(ctx.config.output_dir) : std::filesystem::path(args.out);
  std::filesystem::create_directories(ctx.out);
  return ctx;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

struct Cell {
  nvb::Prior prior;
  nvb::RegressionInstance instance;
  nvb::Decomposition dec;
  std::size_t p;
  std::uint64_t seed;
};

Cell first_cell(const Context& ctx) {
  const std::size_t p = ctx.config.p_list.front();
  const std::uint64_t seed = ctx.config.seeds.front();
  nvb::Prior prior = nvb::make_prior(ctx.config.prior_spec);
  nvb::RegressionInstance inst = nvb::make_instance(ctx.config, p, seed);
  nvb::Decomposition dec = nvb::decompose(inst);
  return {std::move(prior), std::move(inst), std::move(dec), p, seed};
}

nvb::MeanFieldSolution solve_cell(const Context& ctx, const Cell& cell) {
  nvb::OptimizeOptions opt = ctx.config.optimizer;
  opt.seed = nvb::derive_seed(cell.seed, 3000 + cell.p);
  opt.threads = ctx.threads;
  return nvb::optimize(cell.dec, cell.prior, opt);
}

int cmd_solve(const Context& ctx) {
  const Cell cell = first_cell(ctx);
  const auto sol = solve_cell(ctx, cell);
  auto j = sol.to_json();
  j["p"] = cell.p;
  j["seed"] = cell.seed;
  write_json(ctx.out / "solution.json", j);
  std::cout << "R_p = " << nvb::format_double(sol.value) << " (p=" << cell.p << ", converged=" << sol.converged
            << ", restarts_agree=" << sol.restarts_agree << ")\n";
  return sol.converged && sol.fixed_point_residual > ctx.config.optimizer.tol ? 2 : 0;
}

int cmd_oracle(const Context& ctx) {
  const Cell cell = first_cell(ctx);
  const auto sol = solve_cell(ctx, cell);
  nvb::OracleEstimate est;
  double slack;
  if (cell.p <= static_cast<std::size_t>(nvb::kMaxQuadratureDim)) {
    est = nvb::logz_quadrature(cell.dec, cell.prior, ctx.config.nodes_per_dim, ctx.threads);
    slack = est.refinement_delta;
  } else {
    est = nvb::logz_importance_mc(cell.dec, cell.prior, sol, ctx.config.mc_samples,
                                  nvb::derive_seed(cell.seed, 5000 + cell.p), ctx.threads);
    slack = 5.0 * est.std_error;
  }
  auto j = est.to_json();
  j["R_p"] = sol.value;
  j["gap_over_p"] = (est.log_z - sol.value) / static_cast<double>(cell.p);
  write_json(ctx.out / "oracle.json", j);
  std::cout << "log Z = " << nvb::format_double(est.log_z) << " +- " << nvb::format_double(est.std_error) << " ("
            << est.method << "), R_p = " << nvb::format_double(sol.value) << '\n';
  if (est.low_ess_warning) std::cerr << "warning: effective sample size below 10\n";
  return est.log_z < sol.value - slack - 1e-9 ? 2 : 0;
}

int cmd_gibbs(const Context& ctx) {
  const Cell cell = first_cell(ctx);
  const auto sol = solve_cell(ctx, cell);
  nvb::GibbsOptions go = ctx.config.gibbs;
  go.seed = nvb::derive_seed(cell.seed, 6000 + cell.p);
  const auto chain = nvb::gibbs_sample(cell.dec, cell.prior, go);
  nvb::write_csv_matrix(ctx.out / "chain.csv", chain.samples);
  nlohmann::ordered_json j;
  j["p"] = cell.p;
  j["seed"] = cell.seed;
  j["n_samples"] = chain.samples.rows();
  j["burn_in"] = chain.burn_in;
  j["thinning"] = chain.thinning;
  j["split_mean_gap"] = chain.split_mean_gap;
  for (auto zeta : {nvb::Zeta::x_times_t, nvb::Zeta::x_squared, nvb::Zeta::x_times_beta0}) {
    const auto r = nvb::posterior_lln_check(chain, sol, cell.prior, cell.dec.d, zeta, cell.instance.beta0);
    j["lln"][nvb::to_string(zeta)] = {{"posterior_avg", r.posterior_avg},
                                      {"predicted_avg", r.predicted_avg},
                                      {"diff", r.diff},
                                      {"std_error", r.std_error}};
  }
  const auto gap = nvb::b_gap_check(chain, cell.dec, cell.prior, sol);
  j["b_gap"] = {{"mean_Mp_b", gap.mean_Mp_b}, {"R_p", gap.R_p}, {"gap_over_p", gap.gap_over_p},
                {"std_error", gap.std_error}};
  write_json(ctx.out / "gibbs.json", j);
  std::cout << "b gap / p = " << nvb::format_double(gap.gap_over_p) << '\n';
  return gap.gap_over_p < -1e-9 - 5.0 * gap.std_error ? 2 : 0;
}

int cmd_limit(const Context& ctx) {
  if (ctx.config.design_kind == "explicit") {
    std::cerr << "error: design kind 'explicit' has no known limit\n";
    return 1;
  }
  const nvb::Prior prior = nvb::make_prior(ctx.config.prior_spec);
  const nvb::LimitProblem lp = nvb::limit_problem_for(ctx.config, prior);
  nvb::RdeOptions ro = ctx.config.rde;
  ro.seed = nvb::derive_seed(ctx.config.seeds.front(), 7000);
  ro.threads = ctx.threads;
  const auto sol = nvb::solve_rde(lp, ro);
  nvb::save_limit_problem(lp, ctx.out / "limit_problem");
  nvb::write_grid_csv(ctx.out / "F_star.csv", sol.F.values, "[0,1]xR");
  nlohmann::ordered_json j;
  j["value"] = sol.value;
  j["residual"] = sol.residual;
  j["converged"] = sol.converged;
  j["starts_agree"] = sol.starts_agree;
  j["iterations"] = sol.iterations;
  j["m"] = lp.m();
  j["q"] = lp.q();
  write_json(ctx.out / "limit.json", j);
  std::cout << "G(F*) = " << nvb::format_double(sol.value) << " (residual " << nvb::format_double(sol.residual)
            << ")\n";
  return sol.converged && sol.residual > ro.tol ? 2 : 0;
}

int cmd_diagnose(const Context& ctx) {
  const Cell cell = first_cell(ctx);
  nvb::ConditionOptions co;
  co.seed = nvb::derive_seed(cell.seed, 4000 + cell.p);
  co.exact_sup_field = cell.p <= 20;
  const auto rep = nvb::condition_report(cell.dec, cell.prior, co);
  auto j = rep.to_json();
  j["p"] = cell.p;
  j["sigma2"] = ctx.config.sigma2;
  write_json(ctx.out / "conditions.json", j);
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nvb: naive mean-field log-partition certification for Bayesian linear regression"};
  app.require_subcommand(1);
  CommonArgs args;
  std::map<std::string, std::function<int(const Context&)>> handlers = {
      {"solve", cmd_solve},
      {"oracle", cmd_oracle},
      {"gibbs", cmd_gibbs},
      {"limit", cmd_limit},
      {"diagnose", cmd_diagnose},
      {"run", [](const Context& c) { return nvb::run_experiment(c.config, c.out, c.threads, std::cerr); }},
      {"compare-limit", [](const Context& c) { return nvb::compare_finite_vs_limit(c.config, c.out, c.threads, std::cerr); }},
  };
  const std::map<std::string, std::string> help = {
      {"solve", "optimize the mean-field objective for the first (p, seed) cell"},
      {"oracle", "estimate log Z by quadrature (p <= 6) or importance sampling"},
      {"gibbs", "run the Gibbs sampler and the LLN / b-vector checks"},
      {"limit", "solve the limiting fixed-point equation"},
      {"diagnose", "report the sufficient-condition statistics"},
      {"run", "run the configured experiment grid"},
      {"compare-limit", "compare R_p / p with the limiting variational value"},
  };
  for (const auto& [name, _] : handlers) add_common(app.add_subcommand(name, help.at(name)), args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const Context ctx = prepare(args);
    for (const auto& [name, handler] : handlers) {
      if (app.got_subcommand(name)) return handler(ctx);
    }
  } catch (const nvb::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
