#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cmi {

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or lengths that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary input. Carries the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Geometry that would divide by zero (e.g. a source sitting on a pixel).
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Data that admits no normalization (zero variance).
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

/// Metric undefined for the given input, e.g. NMSE against an all-zero truth.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf surfaced during training.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace cmi
