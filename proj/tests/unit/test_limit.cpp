#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "nvb/errors.hpp"
#include "nvb/limit.hpp"
#include "nvb/rng.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

nvb::StepKernel random_kernel(Eigen::Index m, std::uint64_t seed) {
  nvb::Rng rng(seed);
  MatrixXd B(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i; j < m; ++j) B(i, j) = B(j, i) = rng.uniform(-1, 1);
  }
  return {B, false};
}

// sup over all S, T of |sum_{S x T} W| / m^2 by double enumeration.
double brute_cut(const nvb::StepKernel& K) {
  const Eigen::Index m = K.m();
  double best = 0;
  for (long s = 0; s < (1L << m); ++s) {
    for (long t = 0; t < (1L << m); ++t) {
      double sum = 0;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (!((s >> i) & 1)) continue;
        for (Eigen::Index j = 0; j < m; ++j) {
          if ((t >> j) & 1) sum += K.values(i, j);
        }
      }
      best = std::max(best, std::abs(sum));
    }
  }
  return best / static_cast<double>(m * m);
}

nvb::LimitProblem anova_problem(double sigma2, Eigen::Index m, const nvb::Prior& prior, double phi = 0.0) {
  return nvb::build_limit_problem(nvb::LimitKind::anova, {}, nvb::StepFunction::constant(m, phi), sigma2, prior, m,
                                  21);
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "nvb_unit_limit" / name;
  std::filesystem::create_directories(dir.parent_path());
  return dir;
}

}  // namespace

TEST_SUITE("limit") {
  TEST_CASE("exact cut norm matches double enumeration") {
    for (Eigen::Index m : {1, 3, 6, 8}) {
      const auto K = random_kernel(m, 10 + m);
      CHECK(nvb::cut_norm(K, nvb::CutMode::exact) == doctest::Approx(brute_cut(K)).epsilon(1e-12));
    }
  }

  TEST_CASE("cut norm of zero and constant kernels") {
    CHECK(nvb::cut_norm({MatrixXd::Zero(5, 5), false}, nvb::CutMode::exact) == 0.0);
    for (double c : {0.3, -1.7}) {
      CHECK(std::abs(nvb::cut_norm({MatrixXd::Constant(7, 7, c), false}, nvb::CutMode::exact) - std::abs(c)) <= 1e-12);
    }
  }

  TEST_CASE("heuristic cut norm never exceeds the exact value") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto K = random_kernel(4 + static_cast<Eigen::Index>(seed % 9), seed);
      const double exact = nvb::cut_norm(K, nvb::CutMode::exact);
      const double heur = nvb::cut_norm(K, nvb::CutMode::heuristic, seed);
      CHECK(heur <= exact + 1e-12);
      CHECK(heur >= 0.5 * exact);
    }
    CHECK_THROWS_AS((void)nvb::cut_norm(random_kernel(15, 1), nvb::CutMode::exact), nvb::SizeError);
  }

  TEST_CASE("infinity-to-one norm bounds the cut norm") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto K = random_kernel(7, 50 + seed);
      const double cut = nvb::cut_norm(K, nvb::CutMode::exact);
      const double i1 = nvb::infinity_to_one_norm(K);
      CHECK(cut <= i1 + 1e-12);
      CHECK(i1 <= 4 * cut + 1e-12);
    }
  }

  TEST_CASE("embedding rejects asymmetric matrices and clears the diagonal") {
    MatrixXd B = MatrixXd::Ones(3, 3);
    const auto K = nvb::embed_matrix(B, 2.0);
    CHECK(K.values.diagonal().cwiseAbs().maxCoeff() == 0.0);
    CHECK(K.values(0, 1) == 2.0);
    B(0, 1) = 3.0;
    CHECK_THROWS_AS((void)nvb::embed_matrix(B, 1.0), nvb::InvalidInput);
  }

  TEST_CASE("anova embedding of p A agrees with the limit kernel") {
    const Eigen::Index p = 8;
    MatrixXd A = MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) A(i, j) = (i < p / 2) != (j < p / 2) ? 1.0 / p : 0.0;
    }
    const auto K = nvb::embed_matrix(A, static_cast<double>(p));
    const auto lp = anova_problem(1.0, p, nvb::Prior::two_point());
    nvb::StepKernel diff{K.values - lp.W.values, false};
    CHECK(nvb::cut_norm(diff, nvb::CutMode::exact) <= 1e-14);
  }

  TEST_CASE("without interaction the fixed point is one step") {
    const Eigen::Index m = 6;
    const auto prior = nvb::Prior::uniform(257);
    nvb::StepFunction g{VectorXd::LinSpaced(m, -0.8, 1.2)};
    nvb::StepFunction psi{VectorXd::LinSpaced(m, 0.2, 1.5)};
    const auto lp = nvb::make_limit_problem({MatrixXd::Zero(m, m), true}, g, psi, 0.7, prior, 15);
    const auto sol = nvb::solve_rde(lp);
    CHECK(sol.converged);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < lp.q(); ++b) {
        const double theta = (g(a) + std::sqrt(psi(a)) * lp.gh.nodes[b]) / 0.7;
        CHECK(std::abs(sol.F.values(a, b) - prior.cumulant({theta, psi(a) / 0.7}).cdot) <= 1e-12);
      }
    }
  }

  TEST_CASE("solved fixed point is stationary and maximizes the functional") {
    for (const auto& prior : {nvb::Prior::two_point(), nvb::Prior::uniform(257)}) {
      const auto lp = anova_problem(1.0, 16, prior, 0.4);
      nvb::RdeOptions opt;
      opt.seed = 3;
      const auto sol = nvb::solve_rde(lp, opt);
      CHECK(sol.converged);
      CHECK(sol.starts_agree);
      const auto T = nvb::rde_map(lp, sol.F);
      CHECK((T.values - sol.F.values).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK(nvb::rde_map_at(lp, sol.F, 3, lp.gh.nodes[5]) == doctest::Approx(T.values(3, 5)).epsilon(1e-14));
      CHECK(sol.value == nvb::evaluate_functional(lp, sol.F));
      nvb::Rng rng(9);
      for (int rep = 0; rep < 50; ++rep) {
        nvb::GridFunction F{MatrixXd(lp.m(), lp.q())};
        const double scale = rng.uniform(0.01, 0.999);
        for (Eigen::Index i = 0; i < F.values.size(); ++i) F.values.data()[i] = scale * rng.uniform(-1, 1);
        CHECK(nvb::evaluate_functional(lp, F) <= sol.value + 1e-12);
      }
    }
  }

  TEST_CASE("functional rejects infeasible arguments") {
    const auto lp = anova_problem(1.0, 4, nvb::Prior::uniform(129));
    nvb::GridFunction F{MatrixXd::Zero(4, lp.q())};
    F.values(0, 0) = 1.5;
    CHECK_THROWS_AS((void)nvb::evaluate_functional(lp, F), nvb::DomainError);
    F.values(0, 0) = 1.0;
    CHECK(std::isinf(nvb::evaluate_functional(lp, F)));
    CHECK_THROWS_AS((void)nvb::evaluate_functional(lp, nvb::GridFunction{MatrixXd::Zero(3, lp.q())}),
                    nvb::InvalidInput);
  }

  TEST_CASE("spiked limit kernel is the outer product of the spike profile") {
    nvb::LimitParams params;
    params.spike = nvb::Profile1D::linear(0.5, 1.0);
    const auto lp = nvb::build_limit_problem(nvb::LimitKind::spiked, params, nvb::StepFunction::constant(4, 0.25), 1.0,
                                             nvb::Prior::two_point(), 4);
    for (Eigen::Index a = 0; a < 4; ++a) {
      const double ga = 0.5 + nvb::cell_midpoint(a, 4);
      CHECK(lp.psi(a) == 1.0);
      CHECK(lp.W.values(a, a) == doctest::Approx(ga * ga));
    }
    // g = W phi / m + psi phi with constant phi
    CHECK(lp.g(0) == doctest::Approx(0.25 * lp.W.values.row(0).mean() + 0.25));
  }

  TEST_CASE("sparse bernoulli limit integrates the intensity over t") {
    nvb::LimitParams params;
    params.intensity = nvb::Profile2D::product(nvb::Profile1D::linear(0.0, 2.0), nvb::Profile1D::constant(1.5));
    const auto lp = nvb::build_limit_problem(nvb::LimitKind::sparse_bernoulli, params, nvb::StepFunction::constant(3, 0.0),
                                             1.0, nvb::Prior::two_point(), 3);
    // int (2t * 1.5) dt = 1.5 and int (2t * 1.5)^2 dt = 3
    CHECK(lp.psi(1) == doctest::Approx(1.5).epsilon(1e-9));
    CHECK(lp.W.values(0, 2) == doctest::Approx(3.0).epsilon(1e-6));
  }

  TEST_CASE("empirical moments against the grid law") {
    const auto prior = nvb::Prior::two_point();
    const auto lp = anova_problem(1.0, 8, prior);
    const auto sol = nvb::solve_rde(lp);
    VectorXd u(8), xi(8);
    for (Eigen::Index i = 0; i < 8; ++i) {
      xi(i) = 0.0;
      u(i) = nvb::rde_map_at(lp, sol.F, i, 0.0);
    }
    const auto trip = nvb::empirical_triple(u, xi);
    CHECK(trip.x(7) == doctest::Approx(1.0));
    const auto rep = nvb::compare_empirical_to_limit(trip, sol.F, lp);
    CHECK(rep.max_discrepancy >= 0.0);
    CHECK(std::isfinite(rep.max_discrepancy));
  }

  TEST_CASE("grid csv and problem directories round trip") {
    const auto lp = anova_problem(0.8, 6, nvb::Prior::uniform(129), 0.2);
    const auto dir = scratch("problem");
    nvb::save_limit_problem(lp, dir);
    const auto back = nvb::load_limit_problem(dir);
    CHECK(back.W.values == lp.W.values);
    CHECK(back.g.values == lp.g.values);
    CHECK(back.psi.values == lp.psi.values);
    CHECK(back.sigma2 == lp.sigma2);
    CHECK(back.q() == lp.q());
    nvb::GridFunction F{MatrixXd::Constant(6, lp.q(), 0.1)};
    CHECK(nvb::evaluate_functional(back, F) == nvb::evaluate_functional(lp, F));
    nvb::write_grid_csv(scratch("F.csv"), F.values, "[0,1]xR");
    CHECK(nvb::read_grid_csv(scratch("F.csv")) == F.values);
  }

  TEST_CASE("limit kinds") {
    CHECK(nvb::limit_kind_from_string("anova") == nvb::LimitKind::anova);
    CHECK(nvb::to_string(nvb::LimitKind::sparse_bernoulli) == "sparse_bernoulli");
    CHECK_THROWS_AS((void)nvb::limit_kind_from_string("explicit"), nvb::InvalidInput);
  }
}
