#pragma once

#include <stdexcept>
#include <string>

namespace kanc {

// Base of every error the toolkit throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A tape node produced a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

// Input outside the domain of a model or function.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Parameter arrays or operands whose shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class RefinementError : public Error {
 public:
  using Error::Error;
};

// A metric that is undefined for the given data (e.g. all-zero truth).
class MetricError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace kanc
