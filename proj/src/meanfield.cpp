#include "nvb/meanfield.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "nvb/errors.hpp"
#include "nvb/parallel.hpp"
#include "nvb/rng.hpp"

namespace nvb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kClamp = 1.0 - 1e-12;
constexpr double kTieTol = 1e-12;
constexpr double kAgreeTol = 1e-6;
constexpr double kProbeEdge = 1.0 - 1e-7;

void check_dim(const Decomposition& dec, const Eigen::VectorXd& v, const char* what) {
  if (v.size() != dec.dim()) throw InvalidInput(std::string(what) + ": dimension mismatch");
}

double clamp_u(double x) { return std::clamp(x, -kClamp, kClamp); }

bool lex_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) < b(i)) return true;
    if (a(i) > b(i)) return false;
  }
  return false;
}

bool better(const MeanFieldSolution& a, const MeanFieldSolution& b) {
  if (a.value > b.value + kTieTol) return true;
  if (b.value > a.value + kTieTol) return false;
  return lex_less(a.u_hat, b.u_hat);
}

MeanFieldSolution run_sequential(const Decomposition& dec, const Prior& prior, Eigen::VectorXd u,
                                 const OptimizeOptions& opt) {
  const Eigen::Index p = dec.dim();
  Eigen::VectorXd m = dec.A * u;
  MeanFieldSolution sol;
  sol.converged = false;
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    double max_change = 0.0;
    for (Eigen::Index i = 0; i < p; ++i) {
      const double theta = (dec.z(i) - m(i)) / dec.sigma2;
      const double next = clamp_u(prior.cumulant({theta, dec.d(i)}).cdot);
      const double delta = next - u(i);
      if (delta != 0.0) {
        m.noalias() += dec.A.col(i) * delta;
        u(i) = next;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    if (max_change <= opt.tol) {
      // Refresh m to shed accumulated rounding before the final residual test.
      m.noalias() = dec.A * u;
      const double r = fixed_point_residual(dec, prior, u);
      if (r <= opt.tol) {
        sol.converged = true;
        ++it;
        break;
      }
    }
  }
  sol.iterations = it;
  sol.u_hat = std::move(u);
  return sol;
}

MeanFieldSolution run_damped(const Decomposition& dec, const Prior& prior, Eigen::VectorXd u,
                             const OptimizeOptions& opt) {
  MeanFieldSolution sol;
  double value = evaluate_Mp(dec, prior, u);
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    const Eigen::VectorXd b = conditional_means(dec, prior, u);
    if ((b - u).lpNorm<Eigen::Infinity>() <= opt.tol) {
      sol.converged = true;
      break;
    }
    // Alpha restarts from the default each sweep and is halved until M_p does not decrease.
    double alpha = opt.damping;
    bool accepted = false;
    while (alpha >= 1e-14) {
      Eigen::VectorXd cand = ((1.0 - alpha) * u + alpha * b).unaryExpr(&clamp_u);
      const double cv = evaluate_Mp(dec, prior, cand);
      // b - u is an ascent direction, so only rounding noise can make a small step look worse.
      if (cv >= value - 1e-13 * (1.0 + std::abs(value)) || !std::isfinite(value)) {
        u = std::move(cand);
        value = cv;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
  }
  sol.iterations = it;
  sol.u_hat = std::move(u);
  return sol;
}

}  // namespace

double evaluate_Mp(const Decomposition& dec, const Prior& prior, const Eigen::VectorXd& u) {
  check_dim(dec, u, "evaluate_Mp");
  double entropy = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (!(std::abs(u(i)) <= 1.0)) throw DomainError("evaluate_Mp: u must lie in [-1,1]^p");
    const double g = prior.rate(u(i), dec.d(i));
    if (g == kInf) return -kInf;
    entropy += g;
  }
  const double quad = u.dot(dec.A * u);
  return -(quad - 2.0 * dec.z.dot(u)) / (2.0 * dec.sigma2) - entropy;
}

Eigen::VectorXd local_fields(const Decomposition& dec, const Eigen::VectorXd& beta) {
  check_dim(dec, beta, "local_fields");
  return (dec.z - dec.A * beta) / dec.sigma2;
}

Eigen::VectorXd conditional_means(const Decomposition& dec, const Prior& prior, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd theta = local_fields(dec, beta);
  Eigen::VectorXd b(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) b(i) = prior.cumulant({theta(i), dec.d(i)}).cdot;
  return b;
}

double fixed_point_residual(const Decomposition& dec, const Prior& prior, const Eigen::VectorXd& u) {
  return (u - conditional_means(dec, prior, u)).lpNorm<Eigen::Infinity>();
}

nlohmann::json MeanFieldSolution::to_json() const {
  return {{"u_hat", std::vector<double>(u_hat.data(), u_hat.data() + u_hat.size())},
          {"value", value},
          {"residual", fixed_point_residual},
          {"converged", converged},
          {"restarts_agree", restarts_agree},
          {"iterations", iterations},
          {"restart_spread", restart_spread}};
}

MeanFieldSolution optimize_from(const Decomposition& dec, const Prior& prior, const Eigen::VectorXd& start,
                                const OptimizeOptions& options) {
  check_dim(dec, start, "optimize");
  if (options.tol <= 0.0 || options.max_iter < 1) throw InvalidInput("optimize: tol > 0 and max_iter >= 1 required");
  if (!(options.damping > 0.0 && options.damping <= 1.0)) throw InvalidInput("optimize: damping must be in (0,1]");
  Eigen::VectorXd u = start.unaryExpr(&clamp_u);
  MeanFieldSolution sol = options.schedule == Schedule::sequential ? run_sequential(dec, prior, std::move(u), options)
                                                                   : run_damped(dec, prior, std::move(u), options);
  sol.value = evaluate_Mp(dec, prior, sol.u_hat);
  sol.fixed_point_residual = fixed_point_residual(dec, prior, sol.u_hat);
  sol.restarts_agree = true;
  sol.restart_values = {sol.value};
  return sol;
}

MeanFieldSolution optimize(const Decomposition& dec, const Prior& prior, const OptimizeOptions& options) {
  if (options.restarts < 1) throw InvalidInput("optimize: restarts must be >= 1");
  const Eigen::Index p = dec.dim();
  std::vector<Eigen::VectorXd> starts;
  starts.push_back(Eigen::VectorXd::Zero(p));
  for (const auto& s : options.initial_points) {
    check_dim(dec, s, "optimize initial point");
    starts.push_back(s);
  }
  for (int r = 1; static_cast<int>(starts.size()) < options.restarts + static_cast<int>(options.initial_points.size());
       ++r) {
    Rng rng(options.seed, 1000 + static_cast<std::uint64_t>(r));
    Eigen::VectorXd s(p);
    for (Eigen::Index i = 0; i < p; ++i) s(i) = rng.uniform(-1.0, 1.0);
    starts.push_back(std::move(s));
  }

  std::vector<MeanFieldSolution> runs(starts.size());
  parallel_for(starts.size(), options.threads,
               [&](std::size_t k) { runs[k] = optimize_from(dec, prior, starts[k], options); });

  std::size_t best = 0;
  for (std::size_t k = 1; k < runs.size(); ++k) {
    if (better(runs[k], runs[best])) best = k;
  }
  double spread = 0.0;
  for (std::size_t a = 0; a < runs.size(); ++a) {
    for (std::size_t b = a + 1; b < runs.size(); ++b) {
      spread = std::max(spread, (runs[a].u_hat - runs[b].u_hat).lpNorm<Eigen::Infinity>());
    }
  }
  MeanFieldSolution out = runs[best];
  out.restart_spread = spread;
  out.restarts_agree = spread <= kAgreeTol;
  out.restart_values.clear();
  for (const auto& r : runs) out.restart_values.push_back(r.value);
  return out;
}

double ghs_statistic(const Prior& prior) {
  double best = -kInf;
  constexpr int kPoints = 50;
  for (int k = 0; k < kPoints; ++k) {
    const double d = std::pow(10.0, -2.0 + 4.0 * k / (kPoints - 1));
    best = std::max(best, d * prior.cumulant({0.0, d}).cddot);
  }
  return best;
}

namespace {

double field_sum(const Eigen::MatrixXd& A, const Eigen::VectorXd& s) { return (A * s).lpNorm<1>(); }

double sup_field_estimate(const Eigen::MatrixXd& A, int samples, std::uint64_t seed) {
  const Eigen::Index p = A.rows();
  Rng rng(seed, 7);
  auto improve = [&](Eigen::VectorXd u) {
    // Alternate u <- sign(A s), s <- sign(A u); s'Au never decreases.
    double val = field_sum(A, u);
    for (int it = 0; it < 100; ++it) {
      const Eigen::VectorXd s = (A * u).unaryExpr([](double x) { return x >= 0.0 ? 1.0 : -1.0; });
      Eigen::VectorXd next = (A * s).unaryExpr([](double x) { return x >= 0.0 ? 1.0 : -1.0; });
      const double nv = field_sum(A, next);
      if (nv <= val) break;
      u = std::move(next);
      val = nv;
    }
    return val;
  };
  double best = improve(Eigen::VectorXd::Ones(p));
  Eigen::VectorXd alt(p);
  for (Eigen::Index i = 0; i < p; ++i) alt(i) = (i % 2 == 0) ? 1.0 : -1.0;
  best = std::max(best, improve(alt));
  for (int k = 0; k < samples; ++k) {
    Eigen::VectorXd u(p);
    for (Eigen::Index i = 0; i < p; ++i) u(i) = rng.uniform() < 0.5 ? -1.0 : 1.0;
    best = std::max(best, improve(std::move(u)));
  }
  return best;
}

double sup_field_exact(const Eigen::MatrixXd& A) {
  const Eigen::Index p = A.rows();
  Eigen::VectorXd u = Eigen::VectorXd::Ones(p);
  Eigen::VectorXd v = A * u;
  double best = v.lpNorm<1>();
  // Gray code over coordinates 1..p-1; u and -u give the same statistic.
  const std::uint64_t total = p > 1 ? (std::uint64_t{1} << (p - 1)) : 1;
  for (std::uint64_t k = 1; k < total; ++k) {
    const int j = std::countr_zero(k) + 1;
    v.noalias() -= (2.0 * u(j)) * A.col(j);
    u(j) = -u(j);
    best = std::max(best, v.lpNorm<1>());
  }
  return best;
}

}  // namespace

nlohmann::json ConditionReport::to_json() const {
  return {{"trA2_over_p", trA2_over_p},
          {"row_sum_max", row_sum_max},
          {"sup_field_over_p", sup_field_over_p},
          {"sup_field_exact", sup_field_exact},
          {"min_eig_XtX", min_eig_XtX},
          {"hessian_min_eig_bound", hessian_min_eig_bound},
          {"ghs_max", ghs_max},
          {"ghs_bound_ok", ghs_bound_ok},
          {"uniqueness_certified", uniqueness_certified}};
}

ConditionReport condition_report(const Decomposition& dec, const Prior& prior, const ConditionOptions& options) {
  const Eigen::Index p = dec.dim();
  const double pd = static_cast<double>(p);
  ConditionReport rep;
  rep.trA2_over_p = dec.A.squaredNorm() / pd;
  rep.row_sum_max = dec.A.cwiseAbs().rowwise().sum().maxCoeff();
  if (options.exact_sup_field && p <= 20) {
    rep.sup_field_over_p = sup_field_exact(dec.A) / pd;
    rep.sup_field_exact = true;
  } else {
    rep.sup_field_over_p = sup_field_estimate(dec.A, options.sign_samples, options.seed) / pd;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dec.gram(), Eigen::EigenvaluesOnly);
  rep.min_eig_XtX = eig.eigenvalues().minCoeff();
  rep.hessian_min_eig_bound = 1.0 - rep.row_sum_max / dec.sigma2;
  rep.ghs_max = ghs_statistic(prior);
  rep.ghs_bound_ok = rep.ghs_max <= 1.0 + 1e-9;
  rep.uniqueness_certified = rep.row_sum_max < dec.sigma2 ||
                             (prior.satisfies_ghs_shape() && rep.ghs_bound_ok && rep.min_eig_XtX > 0.0);
  return rep;
}

double separation_probe(const Decomposition& dec, const Prior& prior, const Eigen::VectorXd& u_star, double epsilon,
                        const ProbeOptions& options) {
  check_dim(dec, u_star, "separation_probe");
  const Eigen::Index p = dec.dim();
  const double pd = static_cast<double>(p);
  const double radius2 = pd * epsilon;
  const double base = evaluate_Mp(dec, prior, u_star);
  auto box = [](const Eigen::VectorXd& v) -> Eigen::VectorXd { return v.cwiseMax(-kProbeEdge).cwiseMin(kProbeEdge); };
  auto far_enough = [&](const Eigen::VectorXd& v) { return (v - u_star).squaredNorm() >= radius2; };
  auto gradient = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd g = local_fields(dec, v);
    for (Eigen::Index i = 0; i < p; ++i) g(i) -= prior.invert_mean(v(i), dec.d(i));
    return g;
  };
  auto push_out = [&](Eigen::VectorXd v) {
    for (int k = 0; k < 8 && !far_enough(v); ++k) {
      const Eigen::VectorXd diff = v - u_star;
      const double n2 = diff.squaredNorm();
      if (n2 == 0.0) break;
      v = box(u_star + diff * std::sqrt(radius2 / n2) * 1.0000001);
    }
    return v;
  };

  Rng rng(options.seed, 11);
  double best = -kInf;
  for (int probe = 0; probe < options.n_probes; ++probe) {
    Eigen::VectorXd dir(p);
    for (Eigen::Index i = 0; i < p; ++i) dir(i) = rng.normal();
    if (dir.norm() == 0.0) continue;
    dir.normalize();
    double t = std::sqrt(radius2);
    Eigen::VectorXd u = box(u_star + t * dir);
    for (int k = 0; k < 60 && !far_enough(u); ++k) {
      t *= 1.5;
      u = box(u_star + t * dir);
    }
    if (!far_enough(u)) continue;
    double val = evaluate_Mp(dec, prior, u);
    double step = 0.1;
    for (int it = 0; it < options.ascent_steps && step > 1e-10; ++it) {
      const Eigen::VectorXd g = gradient(u);
      Eigen::VectorXd cand = push_out(box(u + step * g));
      if (!far_enough(cand)) {
        step *= 0.5;
        continue;
      }
      const double cv = evaluate_Mp(dec, prior, cand);
      if (cv > val) {
        u = std::move(cand);
        val = cv;
        step *= 1.5;
      } else {
        step *= 0.5;
      }
    }
    best = std::max(best, (val - base) / pd);
  }
  return best;
}

}  // namespace nvb
