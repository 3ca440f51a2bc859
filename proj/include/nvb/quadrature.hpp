#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace nvb {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre rule on [-1, 1]; weights sum to 2.
QuadratureRule gauss_legendre(std::size_t n);

/// Gauss-Hermite rule for the standard normal law; weights sum to 1.
QuadratureRule gauss_hermite(std::size_t n);

double log_sum_exp(std::span<const double> x);

/// Streaming log-sum-exp with rescaling on a new maximum.
class LogSumExp {
 public:
  void add(double x);
  double value() const;
  bool empty() const { return count_ == 0; }

 private:
  double max_ = 0.0;
  double sum_ = 0.0;
  std::size_t count_ = 0;
};

}  // namespace nvb
