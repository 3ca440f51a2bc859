#include "nvb/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "nvb/errors.hpp"
#include "nvb/rng.hpp"

namespace nvb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBracketCap = 1e6;

double tilt_exponent(Tilt t, double z) { return t.gamma1 * z - 0.5 * t.gamma2 * z * z; }

void check_tilt(Tilt t) {
  if (!std::isfinite(t.gamma1) || !std::isfinite(t.gamma2)) {
    throw InvalidInput("tilt parameters must be finite");
  }
}

}  // namespace

Prior::Prior(std::vector<Atom> atoms, std::vector<double> density_values)
    : atoms_(std::move(atoms)), density_(std::move(density_values)) {
  if (density_.size() == 1) throw InvalidInput("density grid needs at least two points");
  double total = 0.0;
  for (const auto& a : atoms_) {
    if (!std::isfinite(a.location) || a.location < -1.0 || a.location > 1.0) {
      throw InvalidInput("atom location outside [-1,1]: " + std::to_string(a.location));
    }
    if (!std::isfinite(a.weight) || a.weight < 0.0) throw InvalidInput("atom weight must be finite and >= 0");
    total += a.weight;
  }
  if (!density_.empty()) {
    step_ = 2.0 / static_cast<double>(density_.size() - 1);
    double integral = 0.0;
    for (std::size_t k = 0; k < density_.size(); ++k) {
      const double f = density_[k];
      if (!std::isfinite(f) || f < 0.0) throw InvalidInput("density values must be finite and >= 0");
      const double w = (k == 0 || k + 1 == density_.size()) ? 0.5 : 1.0;
      integral += w * f;
    }
    total += integral * step_;
  }
  if (!(total > 0.0) || !std::isfinite(total)) throw InvalidInput("degenerate prior: total mass is zero");
  for (auto& a : atoms_) a.weight /= total;
  for (auto& f : density_) f /= total;
  build_nodes();
}

void Prior::build_nodes() {
  nodes_.clear();
  log_weights_.clear();
  auto push = [this](double z, double w) {
    if (w > 0.0) {
      nodes_.push_back(z);
      log_weights_.push_back(std::log(w));
    }
  };
  for (const auto& a : atoms_) push(a.location, a.weight);
  if (!density_.empty()) {
    const std::size_t n = density_.size();
    const double h = step_;
    for (std::size_t k = 0; k < n; ++k) {
      const double z = -1.0 + h * static_cast<double>(k);
      const double ends = (k == 0 || k + 1 == n) ? 1.0 : 2.0;
      push(k + 1 == n ? 1.0 : z, ends * h / 6.0 * density_[k]);
      if (k + 1 < n) push(z + 0.5 * h, 4.0 * h / 6.0 * 0.5 * (density_[k] + density_[k + 1]));
    }
  }
  if (nodes_.empty()) throw InvalidInput("degenerate prior: no node carries mass");
  support_min_ = *std::min_element(nodes_.begin(), nodes_.end());
  support_max_ = *std::max_element(nodes_.begin(), nodes_.end());

  plus_one_support_ = atom_mass_at(1.0) > 0.0;
  minus_one_support_ = atom_mass_at(-1.0) > 0.0;
  if (!density_.empty()) {
    const std::size_t n = density_.size();
    plus_one_support_ = plus_one_support_ || density_[n - 1] > 0.0 || density_[n - 2] > 0.0;
    minus_one_support_ = minus_one_support_ || density_[0] > 0.0 || density_[1] > 0.0;
  }
}

double Prior::atom_mass_at(double location) const {
  double mass = 0.0;
  for (const auto& a : atoms_) {
    if (a.location == location) mass += a.weight;
  }
  return mass;
}

Prior Prior::two_point() { return Prior({{-1.0, 0.5}, {1.0, 0.5}}, {}); }

Prior Prior::uniform(std::size_t grid) { return Prior({}, std::vector<double>(grid, 1.0)); }

Prior Prior::from_potential(const std::function<double(double)>& potential, std::size_t grid) {
  if (grid < 2) throw InvalidInput("density grid needs at least two points");
  std::vector<double> values(grid);
  const double h = 2.0 / static_cast<double>(grid - 1);
  for (std::size_t k = 0; k < grid; ++k) {
    const double z = (k + 1 == grid) ? 1.0 : -1.0 + h * static_cast<double>(k);
    values[k] = std::exp(-potential(z));
  }
  return Prior({}, std::move(values));
}

bool Prior::is_symmetric(double tol) const {
  for (const auto& a : atoms_) {
    if (std::abs(atom_mass_at(a.location) - atom_mass_at(-a.location)) > tol) return false;
  }
  const std::size_t n = density_.size();
  for (std::size_t k = 0; k < n / 2; ++k) {
    if (std::abs(density_[k] - density_[n - 1 - k]) > tol * (1.0 + std::abs(density_[k]))) return false;
  }
  return true;
}

bool Prior::satisfies_ghs_shape(double tol) const {
  if (!atoms_.empty() || density_.empty()) return false;
  const std::size_t n = density_.size();
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (!(density_[k] > 0.0)) return false;
    v[k] = -std::log(density_[k]);
  }
  for (std::size_t k = 0; k < n / 2; ++k) {
    if (std::abs(v[k] - v[n - 1 - k]) > tol * (1.0 + std::abs(v[k]))) return false;
  }
  // Right half: grid points with z >= 0.
  const std::size_t mid = (n - 1) / 2;
  std::vector<double> slope;
  for (std::size_t k = mid; k + 1 < n; ++k) {
    if (v[k + 1] < v[k] - tol * (1.0 + std::abs(v[k]))) return false;
    slope.push_back((v[k + 1] - v[k]) / step_);
  }
  double scale = 1.0;
  for (double s : slope) scale = std::max(scale, std::abs(s));
  for (std::size_t k = 1; k + 1 < slope.size(); ++k) {
    if (slope[k + 1] - 2.0 * slope[k] + slope[k - 1] < -tol * scale) return false;
  }
  return true;
}

CumulantBundle Prior::cumulant(Tilt tilt) const {
  check_tilt(tilt);
  const std::size_t n = nodes_.size();
  thread_local std::vector<double> e;
  e.resize(n);
  double m = -kInf;
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = log_weights_[i] + tilt_exponent(tilt, nodes_[i]);
    m = std::max(m, e[i]);
  }
  double s0 = 0.0, s1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = std::exp(e[i] - m);
    e[i] = w;
    s0 += w;
    s1 += w * nodes_[i];
  }
  const double mean = std::clamp(s1 / s0, -1.0, 1.0);
  double s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dz = nodes_[i] - mean;
    s2 += e[i] * dz * dz;
  }
  return {m + std::log(s0), mean, s2 / s0};
}

double Prior::moment(Tilt tilt, int r) const {
  check_tilt(tilt);
  if (r < 0) throw DomainError("moment order must be nonnegative");
  const std::size_t n = nodes_.size();
  double m = -kInf;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, log_weights_[i] + tilt_exponent(tilt, nodes_[i]));
  double s0 = 0.0, sr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = std::exp(log_weights_[i] + tilt_exponent(tilt, nodes_[i]) - m);
    s0 += w;
    sr += w * std::pow(nodes_[i], r);
  }
  return sr / s0;
}

double Prior::invert_mean(double t, double gamma2, double hint) const {
  if (!std::isfinite(t) || std::abs(t) >= 1.0) throw DomainError("invert_mean: |t| must be < 1");
  if (!std::isfinite(gamma2)) throw InvalidInput("invert_mean: gamma2 must be finite");
  if (!(t > support_min_ && t < support_max_)) {
    throw RangeError("invert_mean: t=" + std::to_string(t) + " outside the achievable mean range");
  }
  if (!std::isfinite(hint)) hint = 0.0;
  hint = std::clamp(hint, -kBracketCap, kBracketCap);
  auto f = [&](double x) { return cumulant({x, gamma2}); };

  CumulantBundle b = f(hint);
  double fx = b.cdot - t;
  if (fx == 0.0) return hint;
  double lo = hint, hi = hint;
  // Expand a bracket around the hint; cdot is increasing in gamma1.
  double step = 1.0;
  if (b.cddot > 0.0) step = std::max(step, 2.0 * std::abs(fx) / b.cddot);
  step = std::min(step, kBracketCap);
  if (fx < 0.0) {
    for (;;) {
      const double cand = std::min(hint + step, kBracketCap);
      if (f(cand).cdot - t >= 0.0) {
        hi = cand;
        break;
      }
      lo = cand;
      if (cand >= kBracketCap) throw RangeError("invert_mean: bracket exceeded cap");
      step *= 2.0;
    }
  } else {
    for (;;) {
      const double cand = std::max(hint - step, -kBracketCap);
      if (f(cand).cdot - t <= 0.0) {
        lo = cand;
        break;
      }
      hi = cand;
      if (cand <= -kBracketCap) throw RangeError("invert_mean: bracket exceeded cap");
      step *= 2.0;
    }
  }

  // Safeguarded Newton on the bracket.
  double x = (hint > lo && hint < hi) ? hint : 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    b = f(x);
    fx = b.cdot - t;
    if (fx == 0.0) return x;
    if (fx < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    if (std::abs(fx) <= 1e-15) return x;
    double next = (b.cddot > 0.0) ? x - fx / b.cddot : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == x || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x))) {
      return x;
    }
    x = next;
  }
  return x;
}

double Prior::rate_with_tilt(double u, double d, double h) const {
  return u * h - cumulant({h, d}).c + cumulant({0.0, d}).c;
}

double Prior::rate(double u, double d) const {
  if (!std::isfinite(u) || std::abs(u) > 1.0) throw DomainError("rate: |u| must be <= 1");
  if (!std::isfinite(d)) throw InvalidInput("rate: d must be finite");
  auto boundary = [&](double edge) {
    // KL(delta_edge || pi_(0,d)) = -log pi_(0,d)({edge}).
    const double mass = atom_mass_at(edge);
    if (!(mass > 0.0)) return kInf;
    return -std::log(mass) + 0.5 * d * edge * edge + cumulant({0.0, d}).c;
  };
  if (std::abs(u) > 1.0 - kBoundaryEps) return boundary(u > 0.0 ? 1.0 : -1.0);
  if (u < support_min_ || u > support_max_) return kInf;
  try {
    const double h = invert_mean(u, d);
    return rate_with_tilt(u, d, h);
  } catch (const RangeError&) {
    return boundary(u > 0.0 ? support_max_ : support_min_);
  }
}

RateDerivatives Prior::rate_derivatives(double u, double d) const {
  if (!std::isfinite(u) || std::abs(u) >= 1.0) throw DomainError("rate_derivatives: |u| must be < 1");
  const double h = invert_mean(u, d);
  const CumulantBundle b = cumulant({h, d});
  RateDerivatives out;
  out.dG_du = h;
  out.d2G_du2 = 1.0 / b.cddot;
  out.dG_dd = 0.5 * moment({h, d}, 2) - 0.5 * moment({0.0, d}, 2);
  return out;
}

double Prior::tilted_moment(double u, double d, int r) const {
  if (r < 1) throw DomainError("tilted_moment: r must be >= 1");
  if (!std::isfinite(u) || std::abs(u) > 1.0) throw DomainError("tilted_moment: |u| must be <= 1");
  if (r == 1) return u;
  const double edge = u > 0.0 ? 1.0 : -1.0;
  if (std::abs(u) == 1.0) return std::pow(edge, r);
  try {
    return moment({invert_mean(u, d), d}, r);
  } catch (const RangeError&) {
    return std::pow(u > 0.0 ? support_max_ : support_min_, r);
  }
}

TiltedSampler Prior::sampler(Tilt tilt) const {
  check_tilt(tilt);
  TiltedSampler s;
  s.step_ = step_;
  for (const auto& a : atoms_) s.atom_locations_.push_back(a.location);
  const std::size_t n = density_.size();
  const std::size_t panels = n > 0 ? n - 1 : 0;

  double shift = -kInf;
  for (const auto& a : atoms_) {
    if (a.weight > 0.0) shift = std::max(shift, std::log(a.weight) + tilt_exponent(tilt, a.location));
  }
  std::vector<double> grid_log(n), mid_log(panels);
  for (std::size_t k = 0; k < n; ++k) {
    const double z = (k + 1 == n) ? 1.0 : -1.0 + step_ * static_cast<double>(k);
    grid_log[k] = density_[k] > 0.0 ? std::log(density_[k]) + tilt_exponent(tilt, z) : -kInf;
    shift = std::max(shift, grid_log[k]);
  }
  for (std::size_t k = 0; k < panels; ++k) {
    const double z = -1.0 + step_ * (static_cast<double>(k) + 0.5);
    const double f = 0.5 * (density_[k] + density_[k + 1]);
    mid_log[k] = f > 0.0 ? std::log(f) + tilt_exponent(tilt, z) : -kInf;
    shift = std::max(shift, mid_log[k]);
  }

  s.cumulative_.reserve(atoms_.size() + panels);
  double acc = 0.0;
  for (const auto& a : atoms_) {
    if (a.weight > 0.0) acc += std::exp(std::log(a.weight) + tilt_exponent(tilt, a.location) - shift);
    s.cumulative_.push_back(acc);
  }
  s.half_left_.resize(panels);
  s.half_mid_.resize(panels);
  s.half_right_.resize(panels);
  for (std::size_t k = 0; k < panels; ++k) {
    const double l = std::exp(grid_log[k] - shift);
    const double m = std::exp(mid_log[k] - shift);
    const double r = std::exp(grid_log[k + 1] - shift);
    s.half_left_[k] = l;
    s.half_mid_[k] = m;
    s.half_right_[k] = r;
    acc += step_ / 6.0 * (l + 4.0 * m + r);
    s.cumulative_.push_back(acc);
  }
  return s;
}

double TiltedSampler::draw(double u_component, double u_inner) const {
  const double target = u_component * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
  if (it == cumulative_.end()) --it;
  const auto idx = static_cast<std::size_t>(it - cumulative_.begin());
  const std::size_t n_atoms = atom_locations_.size();
  if (idx < n_atoms) return atom_locations_[idx];

  const std::size_t k = idx - n_atoms;
  const double h = step_;
  const double left_edge = -1.0 + h * static_cast<double>(k);
  const double l = half_left_[k], m = half_mid_[k], r = half_right_[k];
  const double mass_left = l + m, mass_right = m + r;
  double a, b, start;
  double u = u_inner;
  const double p_left = mass_left / (mass_left + mass_right);
  if (u < p_left) {
    u = u / p_left;
    a = l;
    b = m;
    start = left_edge;
  } else {
    u = (u - p_left) / (1.0 - p_left);
    a = m;
    b = r;
    start = left_edge + 0.5 * h;
  }
  u = std::clamp(u, 0.0, 1.0);
  // Inverse CDF of the linear density a + (b - a) x on [0, 1].
  const double denom = a + std::sqrt(std::max(0.0, a * a + (b - a) * (a + b) * u));
  const double x = denom > 0.0 ? u * (a + b) / denom : u;
  return std::clamp(start + 0.5 * h * x, -1.0, 1.0);
}

std::vector<double> Prior::sample_tilted(Tilt tilt, std::uint64_t seed, std::size_t count) const {
  const TiltedSampler s = sampler(tilt);
  Rng rng(seed);
  std::vector<double> out(count);
  for (auto& x : out) {
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    x = s.draw(u1, u2);
  }
  return out;
}

nlohmann::json Prior::to_json() const {
  nlohmann::json j;
  j["atoms"] = nlohmann::json::array();
  for (const auto& a : atoms_) j["atoms"].push_back({a.location, a.weight});
  if (!density_.empty()) {
    j["density"] = {{"grid_min", -1.0}, {"grid_max", 1.0}, {"values", density_}};
  }
  return j;
}

Prior Prior::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("prior: expected a JSON object");
  std::vector<Atom> atoms;
  if (j.contains("atoms")) {
    for (const auto& a : j.at("atoms")) {
      if (!a.is_array() || a.size() != 2) throw ParseError("prior: atoms must be [location, weight] pairs");
      atoms.push_back({a[0].get<double>(), a[1].get<double>()});
    }
  }
  std::vector<double> values;
  if (j.contains("density") && !j.at("density").is_null()) {
    const auto& d = j.at("density");
    if (d.value("grid_min", -1.0) != -1.0 || d.value("grid_max", 1.0) != 1.0) {
      throw ParseError("prior: density grid must span [-1, 1]");
    }
    values = d.at("values").get<std::vector<double>>();
  }
  if (atoms.empty() && values.empty()) throw ParseError("prior: needs atoms or a density");
  return Prior(std::move(atoms), std::move(values));
}

}  // namespace nvb
