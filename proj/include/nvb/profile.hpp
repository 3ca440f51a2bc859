#pragma once

#include <json.hpp>
#include <vector>

namespace nvb {

/// A function on [0,1] given as a constant, an affine map, or a step function.
class Profile1D {
 public:
  enum class Kind { constant, linear, steps };

  Profile1D() = default;
  static Profile1D constant(double c);
  static Profile1D linear(double intercept, double slope);
  /// Value values[k] on the cell (k/m, (k+1)/m]; x = 0 maps to the first cell.
  static Profile1D steps(std::vector<double> values);

  double operator()(double x) const;
  double max_abs() const;

  static Profile1D from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

 private:
  Kind kind_ = Kind::constant;
  double a_ = 0.0;
  double b_ = 0.0;
  std::vector<double> values_;
};

/// A function on [0,1]^2 (first argument t, second x).
class Profile2D {
 public:
  enum class Kind { constant, product, steps };

  Profile2D() = default;
  static Profile2D constant(double c);
  static Profile2D product(Profile1D in_t, Profile1D in_x);
  /// rows index t-cells, columns index x-cells.
  static Profile2D steps(std::vector<std::vector<double>> values);

  double operator()(double t, double x) const;
  double max_value() const;
  double min_value() const;

  static Profile2D from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

 private:
  Kind kind_ = Kind::constant;
  double c_ = 0.0;
  Profile1D f_t_, f_x_;
  std::vector<std::vector<double>> values_;
};

}  // namespace nvb
