#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nvb/errors.hpp"
#include "nvb/experiment.hpp"
#include "nvb/limit.hpp"
#include "nvb/meanfield.hpp"
#include "nvb/oracle.hpp"
#include "nvb/prior.hpp"
#include "nvb/regression.hpp"

namespace py = pybind11;
using namespace pybind11::literals;

namespace {

nvb::Decomposition make_decomposition(const Eigen::MatrixXd& gram, const Eigen::VectorXd& z, double sigma2) {
  return nvb::Decomposition::from_gram(gram, z, sigma2);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Naive mean-field log-partition certification for Bayesian linear regression.";

  py::register_exception<nvb::InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<nvb::DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<nvb::RangeError>(m, "RangeError", PyExc_ValueError);
  py::register_exception<nvb::SizeError>(m, "SizeError", PyExc_ValueError);
  py::register_exception<nvb::ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<nvb::Prior>(m, "Prior")
      .def_static("two_point", &nvb::Prior::two_point)
      .def_static("uniform", &nvb::Prior::uniform, "grid"_a = nvb::Prior::kDefaultGrid)
      .def_static("from_potential", &nvb::Prior::from_potential, "potential"_a, "grid"_a = nvb::Prior::kDefaultGrid,
                  "Density proportional to exp(-V(x)) on [-1, 1].")
      .def_static("from_spec", [](const std::string& spec) { return nvb::make_prior(nlohmann::json::parse(spec)); },
                  "spec"_a, "Build a prior from its JSON config form, e.g. '\"uniform\"'.")
      .def(py::init([](const std::vector<std::pair<double, double>>& atoms, std::vector<double> density) {
             std::vector<nvb::Atom> a;
             for (auto [loc, w] : atoms) a.push_back({loc, w});
             return nvb::Prior(std::move(a), std::move(density));
           }),
           "atoms"_a, "density"_a = std::vector<double>{})
      .def("cumulant",
           [](const nvb::Prior& p, double g1, double g2) {
             const auto cb = p.cumulant({g1, g2});
             return py::make_tuple(cb.c, cb.cdot, cb.cddot);
           },
           "gamma1"_a, "gamma2"_a, "(c, cdot, cddot) at the tilt (gamma1, gamma2).")
      .def("invert_mean", &nvb::Prior::invert_mean, "t"_a, "gamma2"_a, "hint"_a = 0.0)
      .def("rate", &nvb::Prior::rate, "u"_a, "d"_a)
      .def("sample_tilted",
           [](const nvb::Prior& p, double g1, double g2, std::uint64_t seed, std::size_t count) {
             return p.sample_tilted({g1, g2}, seed, count);
           },
           "gamma1"_a, "gamma2"_a, "seed"_a, "count"_a)
      .def("is_symmetric", &nvb::Prior::is_symmetric, "tol"_a = 1e-12)
      .def("to_json", [](const nvb::Prior& p) { return p.to_json().dump(); });

  py::class_<nvb::Decomposition>(m, "Decomposition")
      .def(py::init(&make_decomposition), "gram"_a, "z"_a, "sigma2"_a)
      .def_readonly("A", &nvb::Decomposition::A)
      .def_readonly("diag", &nvb::Decomposition::diag)
      .def_readonly("z", &nvb::Decomposition::z)
      .def_readonly("d", &nvb::Decomposition::d)
      .def_readonly("sigma2", &nvb::Decomposition::sigma2);

  m.def(
      "decompose",
      [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double sigma2) {
        return nvb::decompose({X, y, sigma2, std::nullopt, 0, "explicit"});
      },
      "X"_a, "y"_a, "sigma2"_a);

  m.def(
      "generate_instance",
      [](const std::string& config, std::size_t p, std::uint64_t seed) {
        const auto inst = nvb::make_instance(nvb::parse_config(config), p, seed);
        return py::make_tuple(inst.X, inst.y, *inst.beta0);
      },
      "config"_a, "p"_a, "seed"_a, "(X, y, beta0) for one (p, seed) cell of a JSON experiment config.");

  py::class_<nvb::MeanFieldSolution>(m, "MeanFieldSolution")
      .def_readonly("u_hat", &nvb::MeanFieldSolution::u_hat)
      .def_readonly("value", &nvb::MeanFieldSolution::value)
      .def_readonly("fixed_point_residual", &nvb::MeanFieldSolution::fixed_point_residual)
      .def_readonly("converged", &nvb::MeanFieldSolution::converged)
      .def_readonly("restarts_agree", &nvb::MeanFieldSolution::restarts_agree)
      .def_readonly("iterations", &nvb::MeanFieldSolution::iterations);

  m.def("evaluate_Mp", &nvb::evaluate_Mp, "dec"_a, "prior"_a, "u"_a);
  m.def("fixed_point_residual", &nvb::fixed_point_residual, "dec"_a, "prior"_a, "u"_a);
  m.def(
      "optimize",
      [](const nvb::Decomposition& dec, const nvb::Prior& prior, int restarts, double tol, std::uint64_t seed,
         const std::string& schedule, std::size_t threads) {
        nvb::OptimizeOptions opt;
        opt.restarts = restarts;
        opt.tol = tol;
        opt.seed = seed;
        opt.threads = threads;
        if (schedule == "damped_parallel") {
          opt.schedule = nvb::Schedule::damped_parallel;
        } else if (schedule != "sequential") {
          throw nvb::InvalidInput("schedule must be 'sequential' or 'damped_parallel'");
        }
        py::gil_scoped_release release;
        return nvb::optimize(dec, prior, opt);
      },
      "dec"_a, "prior"_a, "restarts"_a = 8, "tol"_a = 1e-9, "seed"_a = 0, "schedule"_a = "sequential",
      "threads"_a = 1);

  m.def(
      "condition_report",
      [](const nvb::Decomposition& dec, const nvb::Prior& prior, bool exact_sup_field) {
        nvb::ConditionOptions co;
        co.exact_sup_field = exact_sup_field;
        return nvb::condition_report(dec, prior, co).to_json().dump();
      },
      "dec"_a, "prior"_a, "exact_sup_field"_a = false, "JSON string with the sufficient-condition statistics.");
  m.def("ghs_statistic", &nvb::ghs_statistic, "prior"_a);

  py::class_<nvb::OracleEstimate>(m, "OracleEstimate")
      .def_readonly("log_z", &nvb::OracleEstimate::log_z)
      .def_readonly("std_error", &nvb::OracleEstimate::std_error)
      .def_readonly("method", &nvb::OracleEstimate::method)
      .def_readonly("refinement_delta", &nvb::OracleEstimate::refinement_delta)
      .def_readonly("effective_sample_size", &nvb::OracleEstimate::effective_sample_size);

  m.def(
      "logz_quadrature",
      [](const nvb::Decomposition& dec, const nvb::Prior& prior, int nodes) {
        py::gil_scoped_release release;
        return nvb::logz_quadrature(dec, prior, nodes);
      },
      "dec"_a, "prior"_a, "nodes_per_dim"_a = 24);
  m.def(
      "logz_importance_mc",
      [](const nvb::Decomposition& dec, const nvb::Prior& prior, const nvb::MeanFieldSolution& sol,
         std::size_t n_samples, std::uint64_t seed) {
        py::gil_scoped_release release;
        return nvb::logz_importance_mc(dec, prior, sol, n_samples, seed);
      },
      "dec"_a, "prior"_a, "solution"_a, "n_samples"_a = 20000, "seed"_a = 0);
  m.def(
      "gibbs_sample",
      [](const nvb::Decomposition& dec, const nvb::Prior& prior, int n_samples, int burn_in, int thin,
         std::uint64_t seed) {
        nvb::GibbsOptions go;
        go.n_samples = n_samples;
        go.burn_in = burn_in;
        go.thin = thin;
        go.seed = seed;
        py::gil_scoped_release release;
        return nvb::gibbs_sample(dec, prior, go).samples;
      },
      "dec"_a, "prior"_a, "n_samples"_a = 1000, "burn_in"_a = 1000, "thin"_a = 10, "seed"_a = 0,
      "Retained Gibbs draws, one per row.");

  py::class_<nvb::LimitProblem>(m, "LimitProblem")
      .def_property_readonly("m", &nvb::LimitProblem::m)
      .def_property_readonly("q", &nvb::LimitProblem::q)
      .def_property_readonly("W", [](const nvb::LimitProblem& lp) { return lp.W.values; })
      .def_property_readonly("g", [](const nvb::LimitProblem& lp) { return lp.g.values; })
      .def_property_readonly("psi", [](const nvb::LimitProblem& lp) { return lp.psi.values; });

  m.def(
      "limit_problem",
      [](const std::string& config) {
        const auto c = nvb::parse_config(config);
        return nvb::limit_problem_for(c, nvb::make_prior(c.prior_spec));
      },
      "config"_a, "Limit problem for the design, prior and beta0 profile of a JSON experiment config.");

  py::class_<nvb::RdeSolution>(m, "RdeSolution")
      .def_property_readonly("F", [](const nvb::RdeSolution& s) { return s.F.values; })
      .def_readonly("value", &nvb::RdeSolution::value)
      .def_readonly("residual", &nvb::RdeSolution::residual)
      .def_readonly("converged", &nvb::RdeSolution::converged)
      .def_readonly("starts_agree", &nvb::RdeSolution::starts_agree);

  m.def(
      "solve_rde",
      [](const nvb::LimitProblem& lp, double tol, int starts, std::uint64_t seed) {
        nvb::RdeOptions ro;
        ro.tol = tol;
        ro.starts = starts;
        ro.seed = seed;
        py::gil_scoped_release release;
        return nvb::solve_rde(lp, ro);
      },
      "problem"_a, "tol"_a = 1e-11, "starts"_a = 8, "seed"_a = 0);
  m.def(
      "evaluate_functional",
      [](const nvb::LimitProblem& lp, const Eigen::MatrixXd& F) { return nvb::evaluate_functional(lp, {F}); },
      "problem"_a, "F"_a);

  m.def(
      "cut_norm",
      [](const Eigen::MatrixXd& W, bool exact, std::uint64_t seed) {
        return nvb::cut_norm({W, false}, exact ? nvb::CutMode::exact : nvb::CutMode::heuristic, seed);
      },
      "W"_a, "exact"_a = true, "seed"_a = 0, "Cut norm of the step kernel with cell values W.");
}
