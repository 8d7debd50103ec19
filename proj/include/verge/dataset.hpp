#ifndef VERGE_DATASET_HPP
#define VERGE_DATASET_HPP

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "verge/common.hpp"

namespace verge {

// Constants learned from training data, reused verbatim on held-out rows.
struct Standardizer {
  double y_mean = 0.0;
  Vector x_mean;   // P
  Vector x_sd;     // P, sample sd (n-1 denominator)
  Vector z_min;    // K
  Vector z_range;  // K, max - min

  Matrix transform_x(const Matrix& raw_x) const {
    Matrix out = raw_x;
    for (int j = 0; j < out.cols(); ++j)
      out.col(j) = (out.col(j).array() - x_mean(j)) / x_sd(j);
    return out;
  }

  Matrix transform_z(const Matrix& raw_z) const {
    Matrix out = raw_z;
    for (int k = 0; k < out.cols(); ++k)
      out.col(k) = (out.col(k).array() - z_min(k)) / z_range(k);
    return out;
  }

  Vector center_y(const Vector& raw_y) const {
    return raw_y.array() - y_mean;
  }

  Vector uncenter_y(const Vector& centered) const {
    return centered.array() + y_mean;
  }
};

struct Dataset {
  Vector y;  // centered response
  Matrix X;  // n x P, columns standardized to mean 0, sd 1
  Matrix Z;  // n x K, columns rescaled to [0, 1]
  int n = 0;
  int P = 0;
  int K = 0;
  Standardizer transforms;
};

// Centers y, standardizes X columns (sample sd), rescales Z columns to the unit
// interval. Constant columns are rejected: they carry no selection signal and
// would divide by zero.
inline Dataset standardize(const Vector& raw_y, const Matrix& raw_X, const Matrix& raw_Z) {
  const int n = static_cast<int>(raw_y.size());
  if (n < 2) throw ValidationError("standardize: need at least 2 rows, got " + std::to_string(n));
  if (raw_X.rows() != n || raw_Z.rows() != n)
    throw ValidationError("standardize: row mismatch between y, X, Z");
  const int P = static_cast<int>(raw_X.cols());
  const int K = static_cast<int>(raw_Z.cols());
  if (P < 1) throw ValidationError("standardize: X must have at least one column");
  if (K < 1) throw ValidationError("standardize: Z must have at least one column");
  if (!raw_y.allFinite() || !raw_X.allFinite() || !raw_Z.allFinite())
    throw ValidationError("standardize: non-finite value in input");

  Dataset d;
  d.n = n;
  d.P = P;
  d.K = K;
  d.transforms.y_mean = raw_y.mean();
  d.y = raw_y.array() - d.transforms.y_mean;

  d.transforms.x_mean.resize(P);
  d.transforms.x_sd.resize(P);
  d.X.resize(n, P);
  for (int j = 0; j < P; ++j) {
    const double m = raw_X.col(j).mean();
    const double ss = (raw_X.col(j).array() - m).square().sum();
    const double sd = std::sqrt(ss / (n - 1));
    if (sd == 0.0)
      throw ValidationError("standardize: constant column in X at index " + std::to_string(j));
    d.transforms.x_mean(j) = m;
    d.transforms.x_sd(j) = sd;
    d.X.col(j) = (raw_X.col(j).array() - m) / sd;
  }

  d.transforms.z_min.resize(K);
  d.transforms.z_range.resize(K);
  d.Z.resize(n, K);
  for (int k = 0; k < K; ++k) {
    const double lo = raw_Z.col(k).minCoeff();
    const double hi = raw_Z.col(k).maxCoeff();
    if (hi == lo)
      throw ValidationError("standardize: constant column in Z at index " + std::to_string(k));
    d.transforms.z_min(k) = lo;
    d.transforms.z_range(k) = hi - lo;
    d.Z.col(k) = (raw_Z.col(k).array() - lo) / (hi - lo);
  }
  return d;
}

// Raw rows as they appear on disk. y is absent in prediction inputs.
struct RawData {
  bool has_y = false;
  Vector y;
  Matrix X;
  Matrix Z;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim whitespace
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("csv: cannot parse number '" + s + "' in " + where);
  }
}

}  // namespace detail

// Header is y,x1..xP,z1..zK with the y column optional. Column counts are taken
// from the header, every row must match.
inline RawData read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("csv: empty file " + path);
  auto header = detail::split_csv_line(line);

  RawData raw;
  std::size_t col = 0;
  if (col < header.size() && header[col] == "y") {
    raw.has_y = true;
    ++col;
  }
  int P = 0, K = 0;
  while (col < header.size() && header[col] == "x" + std::to_string(P + 1)) {
    ++P;
    ++col;
  }
  while (col < header.size() && header[col] == "z" + std::to_string(K + 1)) {
    ++K;
    ++col;
  }
  if (col != header.size() || P == 0 || K == 0)
    throw ValidationError("csv: malformed header in " + path +
                          " (expected y,x1..xP,z1..zK with y optional)");

  std::vector<std::vector<double>> rows;
  const std::size_t want = (raw.has_y ? 1 : 0) + P + K;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != want)
      throw ValidationError("csv: row " + std::to_string(rows.size() + 2) + " in " + path +
                            " has " + std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(want));
    std::vector<double> vals(want);
    for (std::size_t i = 0; i < want; ++i)
      vals[i] = detail::parse_double(fields[i], path + " row " + std::to_string(rows.size() + 2));
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw ValidationError("csv: no data rows in " + path);

  const int n = static_cast<int>(rows.size());
  if (raw.has_y) raw.y.resize(n);
  raw.X.resize(n, P);
  raw.Z.resize(n, K);
  for (int i = 0; i < n; ++i) {
    std::size_t c = 0;
    if (raw.has_y) raw.y(i) = rows[i][c++];
    for (int j = 0; j < P; ++j) raw.X(i, j) = rows[i][c++];
    for (int k = 0; k < K; ++k) raw.Z(i, k) = rows[i][c++];
  }
  return raw;
}

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_csv(const std::string& path, const RawData& raw) {
  std::ofstream out(path);
  if (!out) throw ValidationError("csv: cannot write " + path);
  const int n = static_cast<int>(raw.X.rows());
  const int P = static_cast<int>(raw.X.cols());
  const int K = static_cast<int>(raw.Z.cols());
  if (raw.has_y) out << "y,";
  for (int j = 1; j <= P; ++j) out << "x" << j << ",";
  for (int k = 1; k <= K; ++k) out << "z" << k << (k == K ? "" : ",");
  out << "\n";
  for (int i = 0; i < n; ++i) {
    if (raw.has_y) out << format_g17(raw.y(i)) << ",";
    for (int j = 0; j < P; ++j) out << format_g17(raw.X(i, j)) << ",";
    for (int k = 0; k < K; ++k) out << format_g17(raw.Z(i, k)) << (k == K - 1 ? "" : ",");
    out << "\n";
  }
  if (!out) throw ValidationError("csv: write failed for " + path);
}

}  // namespace verge

#endif  // VERGE_DATASET_HPP
