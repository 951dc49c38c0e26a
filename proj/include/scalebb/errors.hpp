#pragma once

#include <stdexcept>
#include <string>

namespace scalebb {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A parameter outside its documented domain (non-positive shape, b > n, ...).
class InvalidParameterError : public Error {
 public:
  using Error::Error;
};

/// CSV ingestion failure; the message names the offending row and column.
class IngestError : public Error {
 public:
  using Error::Error;
};

/// Subset materialization failure (row id out of range, unknown level, ...).
class MaterializeError : public Error {
 public:
  using Error::Error;
};

/// Weighted Gram matrix numerically singular (condition estimate > 1e12).
class SingularDesignError : public Error {
 public:
  using Error::Error;
};

/// Complete or quasi-complete separation in logistic regression.
class SeparationError : public Error {
 public:
  using Error::Error;
};

/// Not enough data to identify the requested quantity (< 2 clusters, < 2 draws).
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// The functional has no registered (rho, g) decomposition.
class UnsupportedLosslessError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration (schema violation, incompatible base measure).
class ConfigError : public Error {
 public:
  std::string field_path;  // dotted path of the offending config key, if known
  ConfigError(const std::string& msg, std::string path = {})
      : Error(msg), field_path(std::move(path)) {}
};

/// Summary records with mismatched dimensions cannot be combined.
class CombineError : public Error {
 public:
  using Error::Error;
};

/// Reference record degenerate for a relative error (zero-length interval).
class DegenerateReferenceError : public Error {
 public:
  using Error::Error;
};

/// Time budget expired before a single unit of work completed.
class BudgetError : public Error {
 public:
  using Error::Error;
};

/// Engine-level failure (all subsets failed, too many failed draws).
class EngineError : public Error {
 public:
  using Error::Error;
};

}  // namespace scalebb
