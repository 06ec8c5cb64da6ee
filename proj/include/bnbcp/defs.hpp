#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace bnbcp {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using matrixd = MatrixX<double>;
using vectord = VectorX<double>;

/// Zero-based entity index within one tensor mode.
using index_t = std::int32_t;
/// Observed count value. 64-bit: aggregated transaction counts can be large.
using count_t = std::int64_t;

inline constexpr const char* kVersion = "0.1.0";

/// Malformed file content (wrong arity, non-integer token); message carries
/// the 1-based line number.
class ParseError : public std::runtime_error {
  public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Structurally invalid file (e.g. missing dims header).
class FormatError : public std::runtime_error {
  public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Well-formed input that violates a domain invariant (index out of bounds,
/// duplicate coordinates, shape mismatch).
class ValidationError : public std::runtime_error {
  public:
    explicit ValidationError(const std::string& msg)
        : std::runtime_error(msg) {}
};

/// Non-finite or out-of-domain value reached a numeric kernel.
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Requested dense enumeration exceeds the configured cell cap.
class SizeError : public std::runtime_error {
  public:
    explicit SizeError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace bnbcp
