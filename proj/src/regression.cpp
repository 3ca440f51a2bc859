#include "nvb/regression.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "nvb/errors.hpp"
#include "nvb/rng.hpp"

namespace nvb {

void RegressionInstance::validate() const {
  if (X.rows() < 1 || X.cols() < 1) throw InvalidInput("instance: X must be at least 1x1");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw InvalidInput("instance: sigma2 must be > 0");
  if (y.size() != 0 && y.size() != X.rows()) throw InvalidInput("instance: y length does not match X rows");
  if (beta0) {
    if (beta0->size() != X.cols()) throw InvalidInput("instance: beta0 length does not match X columns");
    if ((beta0->array().abs() > 1.0).any()) throw InvalidInput("instance: beta0 entries must lie in [-1,1]");
  }
}

Eigen::MatrixXd Decomposition::gram() const {
  Eigen::MatrixXd g = A;
  g.diagonal() = diag;
  return g;
}

Decomposition Decomposition::from_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& z, double sigma2) {
  if (gram.rows() != gram.cols()) throw InvalidInput("decompose: Gram matrix must be square");
  if (z.size() != gram.rows()) throw InvalidInput("decompose: z length does not match Gram size");
  if (!(sigma2 > 0.0)) throw InvalidInput("decompose: sigma2 must be > 0");
  Decomposition dec;
  dec.A = gram;
  dec.diag = gram.diagonal();
  dec.A.diagonal().setZero();
  dec.z = z;
  dec.sigma2 = sigma2;
  dec.d = dec.diag / sigma2;
  return dec;
}

Decomposition Decomposition::with_z(const Eigen::VectorXd& new_z) const {
  if (new_z.size() != dim()) throw InvalidInput("with_z: length mismatch");
  Decomposition out = *this;
  out.z = new_z;
  return out;
}

Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& X) {
  const Eigen::Index p = X.cols();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(p, p);
  g.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g;
}

Decomposition decompose(const RegressionInstance& instance) {
  instance.validate();
  if (!instance.has_response()) throw InvalidInput("decompose: instance has no response y");
  const Eigen::VectorXd z = instance.X.transpose() * instance.y;
  return Decomposition::from_gram(gram_matrix(instance.X), z, instance.sigma2);
}

DesignKind design_kind_from_string(const std::string& name) {
  if (name == "spiked") return DesignKind::spiked;
  if (name == "sparse_bernoulli") return DesignKind::sparse_bernoulli;
  if (name == "anova") return DesignKind::anova;
  if (name == "explicit") return DesignKind::explicit_matrix;
  throw InvalidInput("unknown design kind: " + name);
}

std::string to_string(DesignKind kind) {
  switch (kind) {
    case DesignKind::spiked:
      return "spiked";
    case DesignKind::sparse_bernoulli:
      return "sparse_bernoulli";
    case DesignKind::anova:
      return "anova";
    case DesignKind::explicit_matrix:
      return "explicit";
  }
  return "explicit";
}

RegressionInstance generate_design(const DesignSpec& spec) {
  RegressionInstance inst;
  inst.kind = to_string(spec.kind);
  inst.seed = spec.seed;
  switch (spec.kind) {
    case DesignKind::spiked: {
      if (spec.p < 1 || spec.n < 1) throw InvalidInput("spiked design needs n, p >= 1");
      const auto p = static_cast<Eigen::Index>(spec.p);
      const auto n = static_cast<Eigen::Index>(spec.n);
      Eigen::VectorXd v(p);
      for (Eigen::Index i = 0; i < p; ++i) {
        v(i) = spec.spike(static_cast<double>(i + 1) / static_cast<double>(p)) / std::sqrt(static_cast<double>(p));
      }
      // (I + vv')^{1/2} = I + s vv' with s = (sqrt(1 + |v|^2) - 1) / |v|^2.
      const double vv = v.squaredNorm();
      const double s = vv > 0.0 ? (std::sqrt(1.0 + vv) - 1.0) / vv : 0.0;
      Rng rng(spec.seed, 1);
      inst.X.resize(n, p);
      const double row_scale = 1.0 / std::sqrt(static_cast<double>(n));
      Eigen::VectorXd g(p);
      for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index i = 0; i < p; ++i) g(i) = rng.normal();
        const double proj = s * v.dot(g);
        inst.X.row(r) = (row_scale * (g + proj * v)).transpose();
      }
      break;
    }
    case DesignKind::sparse_bernoulli: {
      if (spec.p < 1 || spec.n < 1) throw InvalidInput("sparse_bernoulli design needs n, p >= 1");
      const auto p = static_cast<Eigen::Index>(spec.p);
      const auto n = static_cast<Eigen::Index>(spec.n);
      const double pd = static_cast<double>(p);
      const double scale = std::sqrt(pd / static_cast<double>(n));
      Rng rng(spec.seed, 2);
      inst.X.setZero(n, p);
      for (Eigen::Index r = 0; r < n; ++r) {
        const double t = static_cast<double>(r + 1) / static_cast<double>(n);
        for (Eigen::Index j = 0; j < p; ++j) {
          const double lambda = spec.intensity(t, static_cast<double>(j + 1) / pd);
          if (!(lambda >= 0.0) || lambda > pd) {
            throw InvalidInput("sparse_bernoulli: intensity must lie in [0, p]");
          }
          if (rng.uniform() < lambda / pd) inst.X(r, j) = scale;
        }
      }
      break;
    }
    case DesignKind::anova: {
      if (spec.p < 2 || spec.p % 2 != 0) throw InvalidInput("anova design needs an even p >= 2");
      const auto pt = static_cast<Eigen::Index>(spec.p / 2);
      const auto p = static_cast<Eigen::Index>(spec.p);
      const double entry = 1.0 / std::sqrt(static_cast<double>(p));
      inst.X.setZero(pt * pt, p);
      for (Eigen::Index i = 0; i < pt; ++i) {
        for (Eigen::Index j = 0; j < pt; ++j) {
          const Eigen::Index row = i * pt + j;
          inst.X(row, i) = entry;
          inst.X(row, pt + j) = entry;
        }
      }
      break;
    }
    case DesignKind::explicit_matrix:
      if (spec.explicit_X.size() == 0) throw InvalidInput("explicit design needs a matrix");
      inst.X = spec.explicit_X;
      break;
  }
  return inst;
}

RegressionInstance sample_response(RegressionInstance instance, const Eigen::VectorXd& beta0, double sigma2,
                                   std::uint64_t seed) {
  if (beta0.size() == 0) throw InvalidInput("sample_response: beta0 is required");
  instance.beta0 = beta0;
  instance.sigma2 = sigma2;
  instance.y.resize(0);
  instance.validate();
  Rng rng(seed, 3);
  const double sd = std::sqrt(sigma2);
  Eigen::VectorXd eps(instance.n());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = sd * rng.normal();
  instance.y = instance.X * beta0 + eps;
  instance.seed = seed;
  return instance;
}

namespace {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_double(const std::string& field, const std::filesystem::path& path, std::size_t line) {
  const char* begin = field.c_str();
  while (*begin == ' ' || *begin == '\t') ++begin;
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end && (*end == ' ' || *end == '\t' || *end == '\r')) ++end;
  if (end == begin || (end && *end != '\0')) {
    throw ParseError(path.string() + ": malformed number '" + field + "'", line);
  }
  return v;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_csv_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
  out << m.rows() << ',' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file", line_no);
  const auto header = split_commas(line);
  if (header.size() != 2) throw ParseError(path.string() + ": header must be 'rows,cols'", line_no);
  const double rows_d = parse_double(header[0], path, line_no);
  const double cols_d = parse_double(header[1], path, line_no);
  if (rows_d < 0 || cols_d < 0 || rows_d != std::floor(rows_d) || cols_d != std::floor(cols_d)) {
    throw ParseError(path.string() + ": header dimensions must be nonnegative integers", line_no);
  }
  const auto rows = static_cast<Eigen::Index>(rows_d);
  const auto cols = static_cast<Eigen::Index>(cols_d);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    ++line_no;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": missing row", line_no);
    const auto fields = split_commas(line);
    if (static_cast<Eigen::Index>(fields.size()) != cols) {
      throw ParseError(path.string() + ": expected " + std::to_string(cols) + " fields", line_no);
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = parse_double(fields[static_cast<std::size_t>(c)], path, line_no);
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      throw ParseError(path.string() + ": trailing data after last row", line_no);
    }
  }
  return m;
}

void save_instance(const RegressionInstance& instance, const std::filesystem::path& json_path) {
  instance.validate();
  const auto dir = json_path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  const std::string stem = json_path.stem().string();
  nlohmann::ordered_json meta;
  meta["n"] = instance.n();
  meta["p"] = instance.p();
  meta["sigma2"] = instance.sigma2;
  meta["seed"] = instance.seed;
  meta["kind"] = instance.kind;
  meta["X_path"] = stem + ".X.csv";
  write_csv_matrix(dir / (stem + ".X.csv"), instance.X);
  if (instance.has_response()) {
    meta["y_path"] = stem + ".y.csv";
    write_csv_matrix(dir / (stem + ".y.csv"), instance.y);
  } else {
    meta["y_path"] = nullptr;
  }
  if (instance.beta0) {
    meta["beta0_path"] = stem + ".beta0.csv";
    write_csv_matrix(dir / (stem + ".beta0.csv"), *instance.beta0);
  } else {
    meta["beta0_path"] = nullptr;
  }
  std::ofstream out(json_path);
  if (!out) throw InvalidInput("cannot open " + json_path.string() + " for writing");
  out << meta.dump(2) << '\n';
}

RegressionInstance load_instance(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw ParseError("cannot open " + json_path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min(e.byte, text.size()); ++i) line += text[i] == '\n';
    throw ParseError(json_path.string() + ": " + e.what(), line);
  }
  const std::size_t last_line = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
  auto require = [&](const char* key) -> const nlohmann::json& {
    if (!meta.contains(key) || meta.at(key).is_null()) {
      throw ParseError(json_path.string() + ": missing field '" + key + "'", std::max<std::size_t>(1, last_line));
    }
    return meta.at(key);
  };
  const auto dir = json_path.parent_path();
  RegressionInstance inst;
  inst.sigma2 = require("sigma2").get<double>();
  inst.X = read_csv_matrix(dir / require("X_path").get<std::string>());
  if (meta.contains("y_path") && !meta["y_path"].is_null()) {
    const Eigen::MatrixXd y = read_csv_matrix(dir / meta["y_path"].get<std::string>());
    if (y.cols() != 1) throw ParseError(json_path.string() + ": y must be a single column");
    inst.y = y.col(0);
  }
  if (meta.contains("beta0_path") && !meta["beta0_path"].is_null()) {
    const Eigen::MatrixXd b = read_csv_matrix(dir / meta["beta0_path"].get<std::string>());
    if (b.cols() != 1) throw ParseError(json_path.string() + ": beta0 must be a single column");
    inst.beta0 = Eigen::VectorXd(b.col(0));
  }
  inst.seed = meta.value("seed", std::uint64_t{0});
  inst.kind = meta.value("kind", std::string("explicit"));
  if (meta.contains("n") && meta["n"].get<Eigen::Index>() != inst.X.rows()) {
    throw ParseError(json_path.string() + ": n does not match X");
  }
  if (meta.contains("p") && meta["p"].get<Eigen::Index>() != inst.X.cols()) {
    throw ParseError(json_path.string() + ": p does not match X");
  }
  inst.validate();
  return inst;
}

}  // namespace nvb
