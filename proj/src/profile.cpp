#include "nvb/profile.hpp"

#include <algorithm>
#include <cmath>

#include "nvb/errors.hpp"

namespace nvb {

namespace {

std::size_t cell_of(double x, std::size_t m) {
  // ceil(m x) - 1, with x = 0 sent to the first cell.
  const double scaled = std::ceil(x * static_cast<double>(m));
  const auto k = scaled <= 1.0 ? std::size_t{0} : static_cast<std::size_t>(scaled) - 1;
  return std::min(k, m - 1);
}

}  // namespace

Profile1D Profile1D::constant(double c) {
  Profile1D p;
  p.kind_ = Kind::constant;
  p.a_ = c;
  return p;
}

Profile1D Profile1D::linear(double intercept, double slope) {
  Profile1D p;
  p.kind_ = Kind::linear;
  p.a_ = intercept;
  p.b_ = slope;
  return p;
}

Profile1D Profile1D::steps(std::vector<double> values) {
  if (values.empty()) throw InvalidInput("step profile needs at least one value");
  Profile1D p;
  p.kind_ = Kind::steps;
  p.values_ = std::move(values);
  return p;
}

double Profile1D::operator()(double x) const {
  switch (kind_) {
    case Kind::constant:
      return a_;
    case Kind::linear:
      return a_ + b_ * x;
    case Kind::steps:
      return values_[cell_of(x, values_.size())];
  }
  return 0.0;
}

double Profile1D::max_abs() const {
  switch (kind_) {
    case Kind::constant:
      return std::abs(a_);
    case Kind::linear:
      return std::max(std::abs(a_), std::abs(a_ + b_));
    case Kind::steps: {
      double m = 0.0;
      for (double v : values_) m = std::max(m, std::abs(v));
      return m;
    }
  }
  return 0.0;
}

Profile1D Profile1D::from_json(const nlohmann::json& j) {
  if (j.is_number()) return constant(j.get<double>());
  if (!j.is_object()) throw ParseError("profile: expected a number or an object");
  if (j.contains("constant")) return constant(j.at("constant").get<double>());
  if (j.contains("linear")) {
    const auto v = j.at("linear").get<std::vector<double>>();
    if (v.size() != 2) throw ParseError("profile: linear needs [intercept, slope]");
    return linear(v[0], v[1]);
  }
  if (j.contains("values")) return steps(j.at("values").get<std::vector<double>>());
  throw ParseError("profile: expected one of constant / linear / values");
}

nlohmann::json Profile1D::to_json() const {
  switch (kind_) {
    case Kind::constant:
      return {{"constant", a_}};
    case Kind::linear:
      return {{"linear", {a_, b_}}};
    case Kind::steps:
      return {{"values", values_}};
  }
  return nullptr;
}

Profile2D Profile2D::constant(double c) {
  Profile2D p;
  p.kind_ = Kind::constant;
  p.c_ = c;
  return p;
}

Profile2D Profile2D::product(Profile1D in_t, Profile1D in_x) {
  Profile2D p;
  p.kind_ = Kind::product;
  p.f_t_ = std::move(in_t);
  p.f_x_ = std::move(in_x);
  return p;
}

Profile2D Profile2D::steps(std::vector<std::vector<double>> values) {
  if (values.empty() || values.front().empty()) throw InvalidInput("step profile needs a nonempty grid");
  for (const auto& row : values) {
    if (row.size() != values.front().size()) throw InvalidInput("step profile rows must have equal length");
  }
  Profile2D p;
  p.kind_ = Kind::steps;
  p.values_ = std::move(values);
  return p;
}

double Profile2D::operator()(double t, double x) const {
  switch (kind_) {
    case Kind::constant:
      return c_;
    case Kind::product:
      return f_t_(t) * f_x_(x);
    case Kind::steps:
      return values_[cell_of(t, values_.size())][cell_of(x, values_.front().size())];
  }
  return 0.0;
}

double Profile2D::max_value() const {
  switch (kind_) {
    case Kind::constant:
      return c_;
    case Kind::product:
      return f_t_.max_abs() * f_x_.max_abs();
    case Kind::steps: {
      double m = values_.front().front();
      for (const auto& row : values_)
        for (double v : row) m = std::max(m, v);
      return m;
    }
  }
  return 0.0;
}

double Profile2D::min_value() const {
  switch (kind_) {
    case Kind::constant:
      return c_;
    case Kind::product:
      return -f_t_.max_abs() * f_x_.max_abs();
    case Kind::steps: {
      double m = values_.front().front();
      for (const auto& row : values_)
        for (double v : row) m = std::min(m, v);
      return m;
    }
  }
  return 0.0;
}

Profile2D Profile2D::from_json(const nlohmann::json& j) {
  if (j.is_number()) return constant(j.get<double>());
  if (!j.is_object()) throw ParseError("profile2d: expected a number or an object");
  if (j.contains("constant")) return constant(j.at("constant").get<double>());
  if (j.contains("product")) {
    const auto& v = j.at("product");
    if (!v.is_array() || v.size() != 2) throw ParseError("profile2d: product needs [profile_t, profile_x]");
    return product(Profile1D::from_json(v[0]), Profile1D::from_json(v[1]));
  }
  if (j.contains("values")) return steps(j.at("values").get<std::vector<std::vector<double>>>());
  throw ParseError("profile2d: expected one of constant / product / values");
}

nlohmann::json Profile2D::to_json() const {
  switch (kind_) {
    case Kind::constant:
      return {{"constant", c_}};
    case Kind::product:
      return {{"product", {f_t_.to_json(), f_x_.to_json()}}};
    case Kind::steps:
      return {{"values", values_}};
  }
  return nullptr;
}

}  // namespace nvb
