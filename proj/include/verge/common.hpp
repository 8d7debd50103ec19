#ifndef VERGE_COMMON_HPP
#define VERGE_COMMON_HPP

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace verge {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using IntMatrix = Eigen::MatrixXi;

constexpr double kLog2Pi = 1.8378770664093454836;

// Bad user input: dimensions, constant columns, out-of-range hyperparameters.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Linear algebra breakdown (non-PD matrix, NaN propagation) inside the sampler.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Trace or result set holds no usable records.
class EmptyTraceError : public std::runtime_error {
 public:
  explicit EmptyTraceError(const std::string& msg) : std::runtime_error(msg) {}
};

// No qualifying posterior records for the requested prediction.
class PredictionError : public std::runtime_error {
 public:
  explicit PredictionError(const std::string& msg) : std::runtime_error(msg) {}
};

inline double log_normal_pdf(double x, double sd) {
  const double z = x / sd;
  return -0.5 * kLog2Pi - std::log(sd) - 0.5 * z * z;
}

inline double log1p_exp(double x) {
  // log(1 + e^x) without overflow.
  return x > 35.0 ? x : std::log1p(std::exp(x));
}

}  // namespace verge

#endif  // VERGE_COMMON_HPP
