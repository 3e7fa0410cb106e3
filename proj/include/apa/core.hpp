#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace apa {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments: dimension mismatches, out-of-range parameters, malformed input.
class InputError : public Error {
 public:
  using Error::Error;
};

// The extrapolation least-squares problem (or a secant system) is singular.
// Callers are expected to shrink the history and retry.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

// No gap between the occupied and virtual generalized eigenvalues; the
// Aufbau density is not uniquely defined.
class WellPosednessError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void require_size(const Vector& v, Index expected, const char* what) {
  if (v.size() != expected) {
    throw InputError(std::string(what) + ": expected dimension " + std::to_string(expected) +
                     ", got " + std::to_string(v.size()));
  }
}

}  // namespace apa
