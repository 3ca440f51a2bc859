#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <json.hpp>
#include <random>
#include <vector>

namespace nvb {

/// Exponential tilt (gamma1, gamma2): d pi_gamma / d pi (z) = exp(gamma1 z - gamma2 z^2 / 2 - c(gamma)).
struct Tilt {
  double gamma1 = 0.0;
  double gamma2 = 0.0;
};

/// Log normalizer of the tilted law and its first two gamma1-derivatives
/// (mean and variance of pi_gamma).
struct CumulantBundle {
  double c = 0.0;
  double cdot = 0.0;
  double cddot = 0.0;
};

struct RateDerivatives {
  double dG_du = 0.0;
  double dG_dd = 0.0;
  double d2G_du2 = 0.0;
};

struct Atom {
  double location = 0.0;
  double weight = 0.0;
};

class Prior;

/// Precomputed inverse-CDF table for one tilted law. Cheap to draw from repeatedly.
class TiltedSampler {
 public:
  template <class Engine>
  double operator()(Engine& engine) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    return draw(unif(engine), unif(engine));
  }

  /// Draw from two independent uniforms: the first picks the component, the second
  /// places the point inside a density panel.
  double draw(double u_component, double u_inner) const;

 private:
  friend class Prior;
  std::vector<double> atom_locations_;
  double step_ = 0.0;
  std::vector<double> cumulative_;     // atoms first, then density panels
  std::vector<double> half_left_;      // per panel: tilted density at left end, midpoint, right end
  std::vector<double> half_mid_;
  std::vector<double> half_right_;
};

/// Probability measure on [-1, 1]: finitely many atoms plus an optional piecewise-linear
/// density on a uniform grid. Internally every integral against the prior is a finite sum
/// over nodes (atoms plus composite Simpson nodes of the density), so all derived
/// quantities are mutually consistent.
class Prior {
 public:
  static constexpr std::size_t kDefaultGrid = 2049;

  Prior(std::vector<Atom> atoms, std::vector<double> density_values);

  static Prior two_point();
  static Prior uniform(std::size_t grid = kDefaultGrid);
  /// Density proportional to exp(-V(x)) on [-1, 1].
  static Prior from_potential(const std::function<double(double)>& potential, std::size_t grid = kDefaultGrid);

  static Prior from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  const std::vector<Atom>& atoms() const { return atoms_; }
  const std::vector<double>& density() const { return density_; }
  double grid_step() const { return step_; }

  bool has_plus_one_support() const { return plus_one_support_; }
  bool has_minus_one_support() const { return minus_one_support_; }
  bool is_symmetric(double tol = 1e-12) const;
  /// True when the prior is a positive density exp(-V) with V even, nondecreasing on
  /// [0,1] and V' convex there (checked on the grid). Uniform qualifies.
  bool satisfies_ghs_shape(double tol = 1e-9) const;

  /// Smallest and largest points carrying mass in the node representation.
  double support_min() const { return support_min_; }
  double support_max() const { return support_max_; }

  CumulantBundle cumulant(Tilt tilt) const;
  /// Integral of z^r against pi_tilt.
  double moment(Tilt tilt, int r) const;

  /// h(t, gamma2): the gamma1 with cdot(gamma1, gamma2) = t. `hint` seeds the bracket.
  double invert_mean(double t, double gamma2, double hint = 0.0) const;

  /// Rate function G(u, d); +infinity where the boundary KL diverges.
  double rate(double u, double d) const;
  /// G(u, d) when h(u, d) is already known; skips the inversion.
  double rate_with_tilt(double u, double d, double h) const;
  RateDerivatives rate_derivatives(double u, double d) const;

  /// Integral of z^r against pi_(h(u,d), d).
  double tilted_moment(double u, double d, int r) const;

  TiltedSampler sampler(Tilt tilt) const;
  std::vector<double> sample_tilted(Tilt tilt, std::uint64_t seed, std::size_t count) const;

  /// Node view used by quadrature-style consumers.
  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& log_weights() const { return log_weights_; }

  /// Boundary threshold: G switches to the KL formula for |u| > 1 - kBoundaryEps.
  static constexpr double kBoundaryEps = 1e-9;

 private:
  void build_nodes();
  double atom_mass_at(double location) const;

  std::vector<Atom> atoms_;
  std::vector<double> density_;  // values on uniform grid over [-1,1]; empty if none
  double step_ = 0.0;
  std::vector<double> nodes_;
  std::vector<double> log_weights_;
  bool plus_one_support_ = false;
  bool minus_one_support_ = false;
  double support_min_ = 0.0;
  double support_max_ = 0.0;
};

}  // namespace nvb
