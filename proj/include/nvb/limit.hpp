#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "nvb/prior.hpp"
#include "nvb/profile.hpp"
#include "nvb/quadrature.hpp"

namespace nvb {

/// Piecewise-constant kernel on [0,1]^2: value values(i,j) on cell ((i/m,(i+1)/m], (j/m,(j+1)/m]).
struct StepKernel {
  Eigen::MatrixXd values;
  bool zero_diagonal = false;

  Eigen::Index m() const { return values.rows(); }
  /// Integral of |W|.
  double l1_norm() const;
};

/// Piecewise-constant function on [0,1] with m cells; cell k is represented by its midpoint.
struct StepFunction {
  Eigen::VectorXd values;

  Eigen::Index m() const { return values.size(); }
  double operator()(Eigen::Index k) const { return values(k); }
  static StepFunction constant(Eigen::Index m, double c);
  static StepFunction from_profile(const Profile1D& f, Eigen::Index m);
  /// Step embedding of a vector: value w_i on cell i.
  static StepFunction from_vector(const Eigen::VectorXd& w) { return {w}; }
};

double cell_midpoint(Eigen::Index k, Eigen::Index m);

/// W_B scaled: entries scale * B(i,j), zero diagonal.
StepKernel embed_matrix(const Eigen::MatrixXd& B, double scale);

enum class CutMode { exact, heuristic };

inline constexpr Eigen::Index kMaxExactCutDim = 14;

/// sup over S, T of |integral of W over S x T|. Exact mode enumerates S (m <= 14) and picks T
/// by column-sum signs; heuristic mode alternates S/T updates from 32 random starts and
/// returns a lower bound.
double cut_norm(const StepKernel& kernel, CutMode mode, std::uint64_t seed = 0);

/// sup over sign functions s, t of integral W(x,y) s(x) t(y); exact by enumeration for m <= 20.
double infinity_to_one_norm(const StepKernel& kernel);

enum class LimitKind { spiked, sparse_bernoulli, anova };

LimitKind limit_kind_from_string(const std::string& name);
std::string to_string(LimitKind kind);

struct LimitParams {
  Profile1D spike = Profile1D::constant(0.0);
  Profile2D intensity = Profile2D::constant(0.0);
  /// t-grid used for the integrals over t in the sparse Bernoulli formulas.
  int t_points = 2048;
};

struct LimitProblem {
  StepKernel W;
  StepFunction g;
  StepFunction psi;
  double sigma2 = 1.0;
  Prior prior;
  QuadratureRule gh;

  Eigen::Index m() const { return g.m(); }
  Eigen::Index q() const { return static_cast<Eigen::Index>(gh.nodes.size()); }
  void validate() const;
};

/// F(x_a, z_b) on the m x q grid of cell midpoints times Gauss-Hermite nodes.
struct GridFunction {
  Eigen::MatrixXd values;
};

/// Assembles W, psi from the design's limit formulas and g = int W(., y) phi(y) dy + psi phi.
LimitProblem build_limit_problem(LimitKind kind, const LimitParams& params, const StepFunction& phi, double sigma2,
                                 const Prior& prior, Eigen::Index m, Eigen::Index q = 33);

/// General problem from explicit grids.
LimitProblem make_limit_problem(StepKernel W, StepFunction g, StepFunction psi, double sigma2, const Prior& prior,
                                Eigen::Index q = 33);

/// The limiting functional at F. Returns -inf if some G term with positive weight is infinite.
double evaluate_functional(const LimitProblem& lp, const GridFunction& F);

/// Right-hand side of the fixed-point equation evaluated on the grid.
GridFunction rde_map(const LimitProblem& lp, const GridFunction& F);

/// Right-hand side at an arbitrary (cell a, z), using the interaction field of F.
double rde_map_at(const LimitProblem& lp, const GridFunction& F, Eigen::Index cell, double z);

struct RdeOptions {
  double damping = 0.5;
  double tol = 1e-11;
  int max_iter = 20000;
  int starts = 8;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct RdeSolution {
  GridFunction F;
  double value = 0.0;
  double residual = 0.0;
  bool converged = false;
  bool starts_agree = false;
  int iterations = 0;
  double start_spread = 0.0;
};

/// Damped iteration F <- (1 - alpha) F + alpha T(F), alpha halved when the residual grows.
/// Zero start plus random starts; returns the start with the highest functional value.
RdeSolution solve_rde(const LimitProblem& lp, const RdeOptions& options = {});

struct EmpiricalTriples {
  Eigen::VectorXd x;
  Eigen::VectorXd z;
  Eigen::VectorXd u;
  /// Each triple carries weight 1/p.
  double weight() const { return 1.0 / static_cast<double>(x.size()); }
};

/// {(i/p, xi_i, u_i)}, i = 1..p.
EmpiricalTriples empirical_triple(const Eigen::VectorXd& u, const Eigen::VectorXd& xi);

struct MomentReport {
  /// empirical(a, b) and limit(a, b) hold E[X^a Z^b U] for a, b in {0, 1, 2}.
  Eigen::Matrix3d empirical;
  Eigen::Matrix3d limit;
  double max_discrepancy = 0.0;

  nlohmann::json to_json() const;
};

/// Mixed moments E[X^a Z^b U] of the triples against the grid law of (X, Z, F(X, Z)).
MomentReport compare_empirical_to_limit(const EmpiricalTriples& triples, const GridFunction& F, const LimitProblem& lp);

/// |value(m, q) - value(m / 2, (q + 1) / 2)| for the solved problem rebuilt on a coarser grid.
double limit_refinement_delta(LimitKind kind, const LimitParams& params, const Profile1D& phi, double sigma2,
                              const Prior& prior, Eigen::Index m, Eigen::Index q, const RdeOptions& options);

/// CSV grid with a one-line header "m=..,q=..,domain=..".
void write_grid_csv(const std::filesystem::path& path, const Eigen::MatrixXd& values, const std::string& domain);
Eigen::MatrixXd read_grid_csv(const std::filesystem::path& path);

/// Writes W.csv, g.csv, psi.csv and problem.json into `dir`.
void save_limit_problem(const LimitProblem& lp, const std::filesystem::path& dir);
LimitProblem load_limit_problem(const std::filesystem::path& dir);

}  // namespace nvb
