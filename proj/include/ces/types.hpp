#ifndef CES_TYPES_HPP
#define CES_TYPES_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace ces {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Discretized unknown function u (or log-transmissivity on a grid).
using ParameterVector = Vector;

/// Latent code u_L produced by an encoder.
using LatentVector = Vector;

/// Raised for malformed configuration, shape mismatches, bad file formats.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised for numerical failures: singular systems, divergent training,
/// rank-deficient Jacobians.
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

} // namespace ces

#endif
