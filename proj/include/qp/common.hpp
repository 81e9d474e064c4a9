#pragma once

#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>

namespace qp {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition or argument violation (bad N, empty input, out-of-range config).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf was produced where finite values are required.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file, wrong magic bytes.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Selects between the serial reference path and the OpenMP path of a kernel.
enum class Exec { serial, parallel };

/// Sets the OpenMP worker count used by `Exec::parallel` kernels. No-op
/// without OpenMP. Kernel results never depend on this value.
void set_jobs(int jobs);
int jobs();

}  // namespace qp
