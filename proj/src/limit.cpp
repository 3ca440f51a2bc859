#include "nvb/limit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "nvb/errors.hpp"
#include "nvb/parallel.hpp"
#include "nvb/regression.hpp"
#include "nvb/rng.hpp"

namespace nvb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd column_sums_over(const Eigen::MatrixXd& W, const std::vector<char>& in_s) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(W.cols());
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    if (in_s[static_cast<std::size_t>(i)]) c += W.row(i).transpose();
  }
  return c;
}

double best_box(const Eigen::VectorXd& col_sums) {
  const double pos = col_sums.cwiseMax(0.0).sum();
  const double neg = -col_sums.cwiseMin(0.0).sum();
  return std::max(pos, neg);
}

}  // namespace

double StepKernel::l1_norm() const {
  const double m2 = static_cast<double>(m()) * static_cast<double>(m());
  return m2 > 0 ? values.cwiseAbs().sum() / m2 : 0.0;
}

double cell_midpoint(Eigen::Index k, Eigen::Index m) {
  return (static_cast<double>(k) + 0.5) / static_cast<double>(m);
}

StepFunction StepFunction::constant(Eigen::Index m, double c) { return {Eigen::VectorXd::Constant(m, c)}; }

StepFunction StepFunction::from_profile(const Profile1D& f, Eigen::Index m) {
  Eigen::VectorXd v(m);
  for (Eigen::Index k = 0; k < m; ++k) v(k) = f(cell_midpoint(k, m));
  return {v};
}

StepKernel embed_matrix(const Eigen::MatrixXd& B, double scale) {
  if (B.rows() != B.cols()) throw InvalidInput("embed_matrix: matrix must be square");
  if (B.size() > 0 && (B - B.transpose()).cwiseAbs().maxCoeff() > 0.0) {
    throw InvalidInput("embed_matrix: matrix must be symmetric");
  }
  StepKernel k;
  k.values = scale * B;
  k.values.diagonal().setZero();
  k.zero_diagonal = true;
  return k;
}

double cut_norm(const StepKernel& kernel, CutMode mode, std::uint64_t seed) {
  const Eigen::Index m = kernel.m();
  if (m == 0) return 0.0;
  const double m2 = static_cast<double>(m) * static_cast<double>(m);
  const Eigen::MatrixXd& W = kernel.values;
  if (mode == CutMode::exact) {
    if (m > kMaxExactCutDim) throw SizeError("exact cut norm supports m <= " + std::to_string(kMaxExactCutDim));
    // Gray-code walk over S; for fixed S the best T takes the columns of one sign.
    Eigen::VectorXd col = Eigen::VectorXd::Zero(m);
    std::vector<char> in_s(static_cast<std::size_t>(m), 0);
    double best = 0.0;
    const std::uint64_t total = std::uint64_t{1} << m;
    for (std::uint64_t k = 1; k < total; ++k) {
      const int j = std::countr_zero(k);
      auto& flag = in_s[static_cast<std::size_t>(j)];
      if (flag) {
        col -= W.row(j).transpose();
      } else {
        col += W.row(j).transpose();
      }
      flag = static_cast<char>(!flag);
      best = std::max(best, best_box(col));
    }
    return best / m2;
  }

  Rng rng(seed, 21);
  double best = 0.0;
  for (int start = 0; start < 32; ++start) {
    for (int sign = 0; sign < 2; ++sign) {
      const double s = sign == 0 ? 1.0 : -1.0;
      std::vector<char> in_s(static_cast<std::size_t>(m));
      for (auto& f : in_s) f = static_cast<char>(rng.uniform() < 0.5);
      double val = -kInf;
      for (int it = 0; it < 100; ++it) {
        const Eigen::VectorXd col = s * column_sums_over(W, in_s);
        Eigen::VectorXd t_ind = (col.array() > 0.0).cast<double>().matrix();
        const Eigen::VectorXd row = s * (W * t_ind);
        std::vector<char> next(static_cast<std::size_t>(m));
        double nv = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
          next[static_cast<std::size_t>(i)] = static_cast<char>(row(i) > 0.0);
          if (row(i) > 0.0) nv += row(i);
        }
        if (nv <= val) break;
        val = nv;
        in_s = std::move(next);
      }
      best = std::max(best, val);
    }
  }
  return best / m2;
}

double infinity_to_one_norm(const StepKernel& kernel) {
  const Eigen::Index m = kernel.m();
  if (m == 0) return 0.0;
  if (m > 20) throw SizeError("infinity_to_one_norm enumerates sign vectors; m <= 20 required");
  const Eigen::MatrixXd& W = kernel.values;
  Eigen::VectorXd s = Eigen::VectorXd::Ones(m);
  Eigen::VectorXd col = W.transpose() * s;
  double best = col.lpNorm<1>();
  const std::uint64_t total = m > 1 ? (std::uint64_t{1} << (m - 1)) : 1;
  for (std::uint64_t k = 1; k < total; ++k) {
    const int j = std::countr_zero(k) + 1;
    col -= 2.0 * s(j) * W.row(j).transpose();
    s(j) = -s(j);
    best = std::max(best, col.lpNorm<1>());
  }
  return best / (static_cast<double>(m) * static_cast<double>(m));
}

LimitKind limit_kind_from_string(const std::string& name) {
  if (name == "spiked") return LimitKind::spiked;
  if (name == "sparse_bernoulli") return LimitKind::sparse_bernoulli;
  if (name == "anova") return LimitKind::anova;
  throw InvalidInput("no known limit for design kind: " + name);
}

std::string to_string(LimitKind kind) {
  switch (kind) {
    case LimitKind::spiked:
      return "spiked";
    case LimitKind::sparse_bernoulli:
      return "sparse_bernoulli";
    case LimitKind::anova:
      return "anova";
  }
  return "anova";
}

void LimitProblem::validate() const {
  const Eigen::Index mm = m();
  if (mm < 1) throw InvalidInput("limit problem: empty grid");
  if (W.values.rows() != mm || W.values.cols() != mm || psi.m() != mm) {
    throw InvalidInput("limit problem: W, g, psi grids disagree");
  }
  if ((W.values - W.values.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + W.values.cwiseAbs().maxCoeff())) {
    throw InvalidInput("limit problem: W must be symmetric");
  }
  if ((psi.values.array() < 0.0).any()) throw InvalidInput("limit problem: psi must be >= 0");
  if (!g.values.allFinite() || !W.values.allFinite()) throw InvalidInput("limit problem: non-finite grid values");
  if (!(sigma2 > 0.0)) throw InvalidInput("limit problem: sigma2 must be > 0");
  if (gh.nodes.empty()) throw InvalidInput("limit problem: empty z rule");
}

LimitProblem make_limit_problem(StepKernel W, StepFunction g, StepFunction psi, double sigma2, const Prior& prior,
                                Eigen::Index q) {
  if (q < 1) throw InvalidInput("limit problem: q must be >= 1");
  LimitProblem lp{std::move(W), std::move(g), std::move(psi), sigma2, prior,
                  gauss_hermite(static_cast<std::size_t>(q))};
  lp.validate();
  return lp;
}

LimitProblem build_limit_problem(LimitKind kind, const LimitParams& params, const StepFunction& phi, double sigma2,
                                 const Prior& prior, Eigen::Index m, Eigen::Index q) {
  if (m < 1) throw InvalidInput("limit problem: m must be >= 1");
  if (phi.m() != m) throw InvalidInput("limit problem: phi grid must have m cells");
  StepKernel W;
  W.values.resize(m, m);
  StepFunction psi = StepFunction::constant(m, 1.0);
  switch (kind) {
    case LimitKind::spiked: {
      const StepFunction G = StepFunction::from_profile(params.spike, m);
      W.values = G.values * G.values.transpose();
      break;
    }
    case LimitKind::sparse_bernoulli: {
      if (params.t_points < 1) throw InvalidInput("limit problem: t_points must be >= 1");
      const Eigen::Index nt = params.t_points;
      Eigen::MatrixXd G(nt, m);
      for (Eigen::Index t = 0; t < nt; ++t) {
        for (Eigen::Index a = 0; a < m; ++a) G(t, a) = params.intensity(cell_midpoint(t, nt), cell_midpoint(a, m));
      }
      W.values = (G.transpose() * G) / static_cast<double>(nt);
      W.values = 0.5 * (W.values + W.values.transpose()).eval();
      psi.values = G.colwise().mean().transpose();
      break;
    }
    case LimitKind::anova: {
      for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b < m; ++b) {
          const bool left_a = cell_midpoint(a, m) < 0.5;
          const bool left_b = cell_midpoint(b, m) < 0.5;
          W.values(a, b) = left_a != left_b ? 1.0 : 0.0;
        }
      }
      psi = StepFunction::constant(m, 0.5);
      break;
    }
  }
  StepFunction g{W.values * phi.values / static_cast<double>(m) + psi.values.cwiseProduct(phi.values)};
  return make_limit_problem(std::move(W), std::move(g), std::move(psi), sigma2, prior, q);
}

namespace {

void check_grid(const LimitProblem& lp, const GridFunction& F) {
  if (F.values.rows() != lp.m() || F.values.cols() != lp.q()) {
    throw InvalidInput("grid function does not match the limit problem grid");
  }
}

Eigen::VectorXd gh_weights(const LimitProblem& lp) {
  return Eigen::Map<const Eigen::VectorXd>(lp.gh.weights.data(), lp.q());
}

Eigen::VectorXd gh_nodes(const LimitProblem& lp) { return Eigen::Map<const Eigen::VectorXd>(lp.gh.nodes.data(), lp.q()); }

// E[W(x_a, X) F(X, Z)] for every cell a.
Eigen::VectorXd interaction(const LimitProblem& lp, const GridFunction& F) {
  const Eigen::VectorXd fbar = F.values * gh_weights(lp);
  return lp.W.values * fbar / static_cast<double>(lp.m());
}

}  // namespace

double evaluate_functional(const LimitProblem& lp, const GridFunction& F) {
  check_grid(lp, F);
  const Eigen::Index m = lp.m();
  const Eigen::Index q = lp.q();
  const double md = static_cast<double>(m);
  const Eigen::VectorXd w = gh_weights(lp);
  const Eigen::VectorXd z = gh_nodes(lp);
  const Eigen::VectorXd fbar = F.values * w;
  const double quad = fbar.dot(lp.W.values * fbar) / (md * md);
  const double lin = lp.g.values.dot(fbar) / md;
  const Eigen::VectorXd fz = F.values * w.cwiseProduct(z);
  const double noise = lp.psi.values.cwiseSqrt().dot(fz) / md;
  double entropy = 0.0;
  for (Eigen::Index a = 0; a < m; ++a) {
    const double d = lp.psi(a) / lp.sigma2;
    for (Eigen::Index b = 0; b < q; ++b) {
      if (w(b) <= 0.0) continue;
      const double v = F.values(a, b);
      if (!(std::abs(v) <= 1.0)) throw DomainError("evaluate_functional: F must take values in [-1,1]");
      const double gv = lp.prior.rate(v, d);
      if (gv == kInf) return -kInf;
      entropy += w(b) * gv;
    }
  }
  return (-0.5 * quad + lin + noise) / lp.sigma2 - entropy / md;
}

double rde_map_at(const LimitProblem& lp, const GridFunction& F, Eigen::Index cell, double z) {
  check_grid(lp, F);
  if (cell < 0 || cell >= lp.m()) throw InvalidInput("rde_map_at: cell out of range");
  const double field = lp.W.values.row(cell).dot(F.values * gh_weights(lp)) / static_cast<double>(lp.m());
  const double theta = (-field + lp.g(cell) + std::sqrt(lp.psi(cell)) * z) / lp.sigma2;
  return lp.prior.cumulant({theta, lp.psi(cell) / lp.sigma2}).cdot;
}

GridFunction rde_map(const LimitProblem& lp, const GridFunction& F) {
  check_grid(lp, F);
  const Eigen::VectorXd field = interaction(lp, F);
  GridFunction out{Eigen::MatrixXd(lp.m(), lp.q())};
  for (Eigen::Index a = 0; a < lp.m(); ++a) {
    const double d = lp.psi(a) / lp.sigma2;
    const double sq = std::sqrt(lp.psi(a));
    for (Eigen::Index b = 0; b < lp.q(); ++b) {
      const double theta = (-field(a) + lp.g(a) + sq * lp.gh.nodes[static_cast<std::size_t>(b)]) / lp.sigma2;
      out.values(a, b) = lp.prior.cumulant({theta, d}).cdot;
    }
  }
  return out;
}

namespace {

RdeSolution iterate_rde(const LimitProblem& lp, GridFunction F, const RdeOptions& opt) {
  RdeSolution sol;
  GridFunction T = rde_map(lp, F);
  double residual = (F.values - T.values).lpNorm<Eigen::Infinity>();
  double alpha = opt.damping;
  int it = 0;
  for (; it < opt.max_iter && residual > opt.tol; ++it) {
    F.values = (1.0 - alpha) * F.values + alpha * T.values;
    T = rde_map(lp, F);
    const double next = (F.values - T.values).lpNorm<Eigen::Infinity>();
    if (next > residual) alpha = std::max(alpha * 0.5, 1.0 / 1024.0);
    residual = next;
  }
  // Undamped polishing steps: each removes the damping lag as long as T contracts.
  for (int k = 0; k < 8 && residual > 0.0; ++k) {
    GridFunction TT = rde_map(lp, T);
    const double next = (T.values - TT.values).lpNorm<Eigen::Infinity>();
    if (!(next < residual)) break;
    F = std::move(T);
    T = std::move(TT);
    residual = next;
  }
  sol.converged = residual <= opt.tol;
  sol.residual = residual;
  sol.iterations = it;
  sol.F = std::move(F);
  return sol;
}

}  // namespace

RdeSolution solve_rde(const LimitProblem& lp, const RdeOptions& options) {
  lp.validate();
  if (options.starts < 1) throw InvalidInput("solve_rde: starts must be >= 1");
  if (!(options.damping > 0.0 && options.damping <= 1.0)) throw InvalidInput("solve_rde: damping must be in (0,1]");
  const Eigen::Index m = lp.m();
  const Eigen::Index q = lp.q();
  std::vector<GridFunction> starts;
  starts.push_back({Eigen::MatrixXd::Zero(m, q)});
  for (int s = 1; s < options.starts; ++s) {
    Rng rng(options.seed, 300 + static_cast<std::uint64_t>(s));
    Eigen::MatrixXd v(m, q);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < q; ++b) v(a, b) = rng.uniform(-1.0, 1.0);
    }
    starts.push_back({v});
  }
  std::vector<RdeSolution> runs(starts.size());
  parallel_for(starts.size(), options.threads, [&](std::size_t k) {
    runs[k] = iterate_rde(lp, starts[k], options);
    runs[k].value = evaluate_functional(lp, runs[k].F);
  });
  std::size_t best = 0;
  for (std::size_t k = 1; k < runs.size(); ++k) {
    if (runs[k].value > runs[best].value + 1e-12) best = k;
  }
  double spread = 0.0;
  for (std::size_t a = 0; a < runs.size(); ++a) {
    for (std::size_t b = a + 1; b < runs.size(); ++b) {
      spread = std::max(spread, (runs[a].F.values - runs[b].F.values).lpNorm<Eigen::Infinity>());
    }
  }
  RdeSolution out = runs[best];
  out.start_spread = spread;
  out.starts_agree = spread <= 1e-6;
  return out;
}

EmpiricalTriples empirical_triple(const Eigen::VectorXd& u, const Eigen::VectorXd& xi) {
  if (u.size() != xi.size()) throw InvalidInput("empirical_triple: length mismatch");
  const Eigen::Index p = u.size();
  EmpiricalTriples t;
  t.x.resize(p);
  for (Eigen::Index i = 0; i < p; ++i) t.x(i) = static_cast<double>(i + 1) / static_cast<double>(p);
  t.z = xi;
  t.u = u;
  return t;
}

nlohmann::json MomentReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      rows.push_back({{"a", a}, {"b", b}, {"empirical", empirical(a, b)}, {"limit", limit(a, b)}});
    }
  }
  return {{"moments", rows}, {"max_discrepancy", max_discrepancy}};
}

MomentReport compare_empirical_to_limit(const EmpiricalTriples& triples, const GridFunction& F, const LimitProblem& lp) {
  check_grid(lp, F);
  MomentReport rep;
  const Eigen::Index p = triples.x.size();
  if (p == 0 || triples.z.size() != p || triples.u.size() != p) throw InvalidInput("compare: malformed triples");
  const Eigen::Index m = lp.m();
  const double md = static_cast<double>(m);
  const Eigen::VectorXd w = gh_weights(lp);
  const Eigen::VectorXd z = gh_nodes(lp);
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      double emp = 0.0;
      for (Eigen::Index i = 0; i < p; ++i) {
        emp += std::pow(triples.x(i), a) * std::pow(triples.z(i), b) * triples.u(i);
      }
      rep.empirical(a, b) = emp / static_cast<double>(p);
      double lim = 0.0;
      for (Eigen::Index k = 0; k < m; ++k) {
        // Exact integral of x^a over the cell.
        const double lo = static_cast<double>(k) / md;
        const double hi = static_cast<double>(k + 1) / md;
        const double xint = (std::pow(hi, a + 1) - std::pow(lo, a + 1)) / (a + 1);
        double zsum = 0.0;
        for (Eigen::Index j = 0; j < lp.q(); ++j) zsum += w(j) * std::pow(z(j), b) * F.values(k, j);
        lim += xint * zsum;
      }
      rep.limit(a, b) = lim;
    }
  }
  rep.max_discrepancy = (rep.empirical - rep.limit).cwiseAbs().maxCoeff();
  return rep;
}

double limit_refinement_delta(LimitKind kind, const LimitParams& params, const Profile1D& phi, double sigma2,
                              const Prior& prior, Eigen::Index m, Eigen::Index q, const RdeOptions& options) {
  auto value_at = [&](Eigen::Index mm, Eigen::Index qq) {
    const LimitProblem lp =
        build_limit_problem(kind, params, StepFunction::from_profile(phi, mm), sigma2, prior, mm, qq);
    return solve_rde(lp, options).value;
  };
  return std::abs(value_at(m, q) - value_at(std::max<Eigen::Index>(1, m / 2), std::max<Eigen::Index>(1, (q + 1) / 2)));
}

void write_grid_csv(const std::filesystem::path& path, const Eigen::MatrixXd& values, const std::string& domain) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
  out << "m=" << values.rows() << ",q=" << values.cols() << ",domain=" << domain << '\n';
  char buf[40];
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", values(r, c));
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

Eigen::MatrixXd read_grid_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw ParseError(path.string() + ": empty file", 1);
  long rows = -1, cols = -1;
  {
    std::stringstream ss(header);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.rfind("m=", 0) == 0) rows = std::stol(item.substr(2));
      if (item.rfind("q=", 0) == 0) cols = std::stol(item.substr(2));
    }
  }
  if (rows < 0 || cols < 0) throw ParseError(path.string() + ": header must contain m= and q=", 1);
  Eigen::MatrixXd v(rows, cols);
  std::string line;
  for (long r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) throw ParseError(path.string() + ": missing row", static_cast<std::size_t>(r + 2));
    std::stringstream ss(line);
    std::string item;
    for (long c = 0; c < cols; ++c) {
      if (!std::getline(ss, item, ',')) {
        throw ParseError(path.string() + ": missing field", static_cast<std::size_t>(r + 2));
      }
      char* end = nullptr;
      v(r, c) = std::strtod(item.c_str(), &end);
      if (end == item.c_str()) throw ParseError(path.string() + ": malformed number", static_cast<std::size_t>(r + 2));
    }
  }
  return v;
}

void save_limit_problem(const LimitProblem& lp, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_grid_csv(dir / "W.csv", lp.W.values, "[0,1]x[0,1]");
  write_grid_csv(dir / "g.csv", lp.g.values, "[0,1]");
  write_grid_csv(dir / "psi.csv", lp.psi.values, "[0,1]");
  nlohmann::ordered_json j;
  j["m"] = lp.m();
  j["q"] = lp.q();
  j["sigma2"] = lp.sigma2;
  j["W_path"] = "W.csv";
  j["g_path"] = "g.csv";
  j["psi_path"] = "psi.csv";
  j["prior"] = lp.prior.to_json();
  std::ofstream out(dir / "problem.json");
  out << j.dump(2) << '\n';
}

LimitProblem load_limit_problem(const std::filesystem::path& dir) {
  std::ifstream in(dir / "problem.json");
  if (!in) throw ParseError("cannot open " + (dir / "problem.json").string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("problem.json: ") + e.what());
  }
  StepKernel W{read_grid_csv(dir / j.at("W_path").get<std::string>()), false};
  StepFunction g{read_grid_csv(dir / j.at("g_path").get<std::string>()).col(0)};
  StepFunction psi{read_grid_csv(dir / j.at("psi_path").get<std::string>()).col(0)};
  return make_limit_problem(std::move(W), std::move(g), std::move(psi), j.at("sigma2").get<double>(),
                            Prior::from_json(j.at("prior")), j.at("q").get<Eigen::Index>());
}

}  // namespace nvb
