#pragma once

#include <stdexcept>
#include <string>

namespace cppgen {

// Base for every error raised by the library. Callers that only care about
// "something went wrong in cppgen" can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at position " + std::to_string(position) + ")"),
        message_(what),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }
  // The message without the position suffix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  std::size_t position_;
};

class InvalidModel : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class NonUltrametricError : public Error {
 public:
  explicit NonUltrametricError(double max_deviation)
      : Error("tree is not ultrametric: max relative tip-depth deviation " +
              std::to_string(max_deviation)),
        max_deviation_(max_deviation) {}
  double max_deviation() const noexcept { return max_deviation_; }

 private:
  double max_deviation_;
};

class NonBinaryError : public Error {
 public:
  using Error::Error;
};

class StepTooLarge : public Error {
 public:
  using Error::Error;
};

class SolverFailure : public Error {
 public:
  using Error::Error;
};

class PopulationCapExceeded : public Error {
 public:
  using Error::Error;
};

class InsufficientTips : public Error {
 public:
  using Error::Error;
};

class TieError : public Error {
 public:
  using Error::Error;
};

class SizeGuardExceeded : public Error {
 public:
  using Error::Error;
};

class QuadratureFailure : public Error {
 public:
  using Error::Error;
};

class ConvergenceFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace cppgen
