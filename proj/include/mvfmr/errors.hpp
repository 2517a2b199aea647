#pragma once

#include <stdexcept>
#include <string>

namespace mvfmr {

// Root of all recoverable failures raised by this library. Preconditions that
// indicate programmer error (wrong sizes passed to internal helpers, etc.)
// use std::invalid_argument instead.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// fpca
class DomainGapError : public Error {
public:
  using Error::Error;
};
class SingularCovarianceError : public Error {
public:
  using Error::Error;
};
class OutOfDomainError : public Error {
public:
  using Error::Error;
};

// estimators
class NonConvergenceError : public Error {
public:
  using Error::Error;
};
class IllConditionedWeightError : public Error {
public:
  using Error::Error;
};
class SeparationError : public Error {
public:
  using Error::Error;
};
class RankDeficiencyError : public Error {
public:
  using Error::Error;
};

// model
class InsufficientComponentsError : public Error {
public:
  using Error::Error;
};
class DimensionMismatchError : public Error {
public:
  using Error::Error;
};
class InsufficientRepsError : public Error {
public:
  using Error::Error;
};

// metrics
class MissingBandsError : public Error {
public:
  using Error::Error;
};
class SingleClassError : public Error {
public:
  using Error::Error;
};

// cli / io
class ConfigError : public Error {
public:
  using Error::Error;
};
class SchemaError : public Error {
public:
  using Error::Error;
};
class SubjectMismatchError : public Error {
public:
  using Error::Error;
};

}  // namespace mvfmr
