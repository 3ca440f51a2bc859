#include <doctest.h>

#include <cmath>
#include <limits>

#include "nvb/errors.hpp"
#include "nvb/meanfield.hpp"
#include "nvb/rng.hpp"
#include "oracles.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Random symmetric coupling with the requested max absolute row sum.
nvb::Decomposition random_problem(Eigen::Index p, double row_sum, double sigma2, std::uint64_t seed) {
  nvb::Rng rng(seed);
  MatrixXd A = MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i + 1; j < p; ++j) A(i, j) = A(j, i) = rng.uniform(-1, 1);
  }
  const double worst = A.cwiseAbs().rowwise().sum().maxCoeff();
  if (worst > 0) A *= row_sum / worst;
  MatrixXd gram = A;
  for (Eigen::Index i = 0; i < p; ++i) gram(i, i) = rng.uniform(0.5, 2.0);
  VectorXd z(p);
  for (Eigen::Index i = 0; i < p; ++i) z(i) = rng.normal() * 1.5;
  return nvb::Decomposition::from_gram(gram, z, sigma2);
}

double two_point_Mp(const nvb::Decomposition& dec, const VectorXd& u) {
  double v = -(u.dot(dec.A * u) - 2 * dec.z.dot(u)) / (2 * dec.sigma2);
  for (Eigen::Index i = 0; i < u.size(); ++i) v -= oracle::two_point_rate(u(i));
  return v;
}

}  // namespace

TEST_SUITE("meanfield") {
  TEST_CASE("objective matches the closed form for the two-point prior") {
    const auto dec = random_problem(5, 0.8, 1.3, 1);
    const auto prior = nvb::Prior::two_point();
    nvb::Rng rng(2);
    for (int rep = 0; rep < 10; ++rep) {
      VectorXd u(5);
      for (int i = 0; i < 5; ++i) u(i) = rng.uniform(-1, 1);
      CHECK(nvb::evaluate_Mp(dec, prior, u) == doctest::Approx(two_point_Mp(dec, u)).epsilon(1e-10));
    }
    VectorXd corner = VectorXd::Ones(5);
    CHECK(nvb::evaluate_Mp(dec, prior, corner) == doctest::Approx(two_point_Mp(dec, corner)).epsilon(1e-12));
    CHECK(nvb::evaluate_Mp(dec, nvb::Prior::uniform(257), corner) == -std::numeric_limits<double>::infinity());
    corner(0) = 1.01;
    CHECK_THROWS_AS((void)nvb::evaluate_Mp(dec, prior, corner), nvb::DomainError);
    CHECK_THROWS_AS((void)nvb::evaluate_Mp(dec, prior, VectorXd::Zero(4)), nvb::InvalidInput);
  }

  TEST_CASE("uncoupled problems are solved in closed form") {
    const auto prior = nvb::Prior::uniform(513);
    VectorXd z(3);
    z << 0.4, -2.0, 3.5;
    VectorXd diag(3);
    diag << 1.0, 0.5, 2.0;
    const auto dec = nvb::Decomposition::from_gram(MatrixXd(diag.asDiagonal()), z, 0.8);
    const auto sol = nvb::optimize(dec, prior);
    double want = 0;
    for (int i = 0; i < 3; ++i) {
      const double theta = z(i) / 0.8;
      CHECK(std::abs(sol.u_hat(i) - prior.cumulant({theta, dec.d(i)}).cdot) <= 1e-10);
      want += prior.cumulant({theta, dec.d(i)}).c - prior.cumulant({0, dec.d(i)}).c;
    }
    CHECK(std::abs(sol.value - want) <= 1e-10);
  }

  TEST_CASE("two-dimensional optimum beats a dense grid search") {
    const auto prior = nvb::Prior::two_point();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto dec = random_problem(2, 3.0, 1.0, 10 + seed);  // strong coupling, may be bimodal
      const auto sol = nvb::optimize(dec, prior);
      double best = -1e300;
      for (int a = -400; a <= 400; ++a) {
        for (int b = -400; b <= 400; ++b) {
          VectorXd u(2);
          u << a / 400.0, b / 400.0;
          best = std::max(best, two_point_Mp(dec, u));
        }
      }
      CHECK(sol.value >= best - 1e-9);
      CHECK(sol.value - best <= 1e-3);
    }
  }

  TEST_CASE("converged solutions are fixed points") {
    for (const auto& prior : {nvb::Prior::two_point(), nvb::Prior::uniform(257)}) {
      for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const auto dec = random_problem(12, 0.5 + seed * 0.4, 1.0, 30 + seed);
        const auto sol = nvb::optimize(dec, prior);
        CHECK(sol.converged);
        CHECK(sol.fixed_point_residual <= 1e-9);
        CHECK(nvb::fixed_point_residual(dec, prior, sol.u_hat) == doctest::Approx(sol.fixed_point_residual));
        CHECK(sol.value == nvb::evaluate_Mp(dec, prior, sol.u_hat));
      }
    }
  }

  TEST_CASE("schedules agree when the maximizer is unique") {
    const auto prior = nvb::Prior::uniform(257);
    const auto dec = random_problem(10, 0.6, 1.0, 77);
    nvb::OptimizeOptions opt;
    const auto a = nvb::optimize(dec, prior, opt);
    opt.schedule = nvb::Schedule::damped_parallel;
    const auto b = nvb::optimize(dec, prior, opt);
    CHECK(a.restarts_agree);
    CHECK(b.restarts_agree);
    CHECK((a.u_hat - b.u_hat).cwiseAbs().maxCoeff() <= 1e-7);
    CHECK(a.value == doctest::Approx(b.value).epsilon(1e-12));
  }

  TEST_CASE("optimization is deterministic and thread-count invariant") {
    const auto prior = nvb::Prior::two_point();
    const auto dec = random_problem(15, 4.0, 1.0, 5);
    nvb::OptimizeOptions opt;
    opt.seed = 42;
    const auto a = nvb::optimize(dec, prior, opt);
    opt.threads = 3;
    const auto b = nvb::optimize(dec, prior, opt);
    CHECK(a.u_hat == b.u_hat);
    CHECK(a.value == b.value);
    CHECK(a.restart_values == b.restart_values);
  }

  TEST_CASE("local fields and conditional means") {
    const auto dec = random_problem(4, 1.0, 2.0, 8);
    const VectorXd beta = VectorXd::LinSpaced(4, -0.5, 0.9);
    const VectorXd theta = nvb::local_fields(dec, beta);
    CHECK((theta - (dec.z - dec.A * beta) / 2.0).cwiseAbs().maxCoeff() <= 1e-14);
    const VectorXd b = nvb::conditional_means(dec, nvb::Prior::two_point(), beta);
    for (int i = 0; i < 4; ++i) CHECK(b(i) == doctest::Approx(std::tanh(theta(i))).epsilon(1e-12));
  }

  TEST_CASE("condition report on the anova design") {
    const Eigen::Index p = 8;
    MatrixXd gram = MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) gram(i, j) = i == j ? 0.5 : ((i < p / 2) != (j < p / 2) ? 1.0 / p : 0.0);
    }
    const auto dec = nvb::Decomposition::from_gram(gram, VectorXd::Zero(p), 1.0);
    nvb::ConditionOptions co;
    co.exact_sup_field = true;
    const auto rep = nvb::condition_report(dec, nvb::Prior::uniform(257), co);
    CHECK(rep.row_sum_max == doctest::Approx(0.5));
    CHECK(rep.trA2_over_p == doctest::Approx(1.0 / (2 * p)));
    // all-ones attains (A u)_i = 1/2 for every i
    CHECK(rep.sup_field_over_p == doctest::Approx(0.5));
    CHECK(rep.min_eig_XtX == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rep.hessian_min_eig_bound == doctest::Approx(0.5));
    CHECK(rep.uniqueness_certified);
  }

  TEST_CASE("exact sup-field matches brute force and bounds the estimate") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const auto dec = random_problem(9, 2.0, 1.0, 100 + seed);
      double brute = 0;
      for (int mask = 0; mask < (1 << 9); ++mask) {
        VectorXd s(9);
        for (int i = 0; i < 9; ++i) s(i) = (mask >> i) & 1 ? 1.0 : -1.0;
        brute = std::max(brute, (dec.A * s).cwiseAbs().sum());
      }
      nvb::ConditionOptions co;
      co.exact_sup_field = true;
      const double exact = nvb::condition_report(dec, nvb::Prior::two_point(), co).sup_field_over_p;
      co.exact_sup_field = false;
      const double est = nvb::condition_report(dec, nvb::Prior::two_point(), co).sup_field_over_p;
      CHECK(exact == doctest::Approx(brute / 9).epsilon(1e-12));
      CHECK(est <= exact + 1e-12);
    }
  }

  TEST_CASE("GHS statistic") {
    CHECK(nvb::ghs_statistic(nvb::Prior::uniform()) <= 1.0 + 1e-9);
    CHECK(nvb::ghs_statistic(nvb::Prior::uniform()) > 0.9);
    // two-point variance at zero tilt is 1, so d * cddot reaches 100 on the grid
    CHECK(nvb::ghs_statistic(nvb::Prior::two_point()) == doctest::Approx(100.0));
  }

  TEST_CASE("separation probe never exceeds the global maximum") {
    const auto prior = nvb::Prior::uniform(257);
    const auto dec = random_problem(8, 0.5, 1.0, 4);
    const auto sol = nvb::optimize(dec, prior);
    const double gap = nvb::separation_probe(dec, prior, sol.u_hat, 0.05);
    CHECK(gap <= 1e-12);
    CHECK(gap < -1e-4);
  }
}
