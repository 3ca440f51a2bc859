#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "nvb/profile.hpp"

namespace nvb {

/// y = X beta + eps, eps ~ N(0, sigma2 I). `y` is empty until a response is attached.
struct RegressionInstance {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  double sigma2 = 1.0;
  std::optional<Eigen::VectorXd> beta0;
  std::uint64_t seed = 0;
  std::string kind = "explicit";

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }
  bool has_response() const { return y.size() > 0; }
  void validate() const;
};

/// Split of the Gram matrix X'X into its off-diagonal part A (zero diagonal) and its
/// diagonal, together with z = X'y and the scaled diagonal d = diag / sigma2.
struct Decomposition {
  Eigen::MatrixXd A;
  Eigen::VectorXd diag;
  Eigen::VectorXd z;
  Eigen::VectorXd d;
  double sigma2 = 1.0;

  Eigen::Index dim() const { return A.rows(); }
  /// A + diag(diag); bit-identical to the Gram matrix it was split from.
  Eigen::MatrixXd gram() const;

  static Decomposition from_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& z, double sigma2);
  /// Same Gram split with a different response vector.
  Decomposition with_z(const Eigen::VectorXd& z) const;
};

/// Exactly symmetric X'X.
Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& X);

Decomposition decompose(const RegressionInstance& instance);

enum class DesignKind { spiked, sparse_bernoulli, anova, explicit_matrix };

DesignKind design_kind_from_string(const std::string& name);
std::string to_string(DesignKind kind);

struct DesignSpec {
  DesignKind kind = DesignKind::anova;
  std::size_t p = 0;
  /// Rows; ignored for anova (n = (p/2)^2).
  std::size_t n = 0;
  /// Spike profile G for the spiked design: v_i = G(i/p) / sqrt(p).
  Profile1D spike = Profile1D::constant(0.0);
  /// Intensity G(t, x) for the sparse Bernoulli design: P(B(i,j) = 1) = G(i/n, j/p) / p.
  Profile2D intensity = Profile2D::constant(0.0);
  Eigen::MatrixXd explicit_X;
  std::uint64_t seed = 0;
};

/// Design matrix only; y is left empty.
RegressionInstance generate_design(const DesignSpec& spec);

RegressionInstance sample_response(RegressionInstance instance, const Eigen::VectorXd& beta0, double sigma2,
                                   std::uint64_t seed);

/// CSV matrix: first line "rows,cols", then comma-separated rows at 17 significant digits.
void write_csv_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& path);

/// Writes `<stem>.X.csv`, `<stem>.y.csv`, `<stem>.beta0.csv` (when present) next to a JSON
/// sidecar at `json_path` holding {n, p, sigma2, seed, kind, X_path, y_path, beta0_path}.
void save_instance(const RegressionInstance& instance, const std::filesystem::path& json_path);
RegressionInstance load_instance(const std::filesystem::path& json_path);

}  // namespace nvb
