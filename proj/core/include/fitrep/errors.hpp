#pragma once

#include <stdexcept>
#include <string>

namespace fitrep {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent configuration. CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage failed. CLI maps this to exit code 3.
class StageError : public Error {
 public:
  using Error::Error;
};

// Invalid input data (files, arguments, preconditions). CLI exit code 4.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A byte-level container (FVEC, SPDR, FBCI, store) is malformed.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Free-form model output could not be reduced to a JSON object.
class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Extraction output does not satisfy the concept schema.
class SchemaViolation : public ValidationError {
 public:
  explicit SchemaViolation(const std::string& dim)
      : ValidationError("schema violation: dimension '" + dim + "'"), dim_(dim) {}
  const std::string& dimension() const { return dim_; }

 private:
  std::string dim_;
};

// Remote extraction gave up on one item after retries.
class ExtractionFailed : public Error {
 public:
  ExtractionFailed(const std::string& item_id, const std::string& cause)
      : Error("extraction failed for item '" + item_id + "': " + cause),
        item_id_(item_id),
        cause_(cause) {}
  const std::string& item_id() const { return item_id_; }
  const std::string& cause() const { return cause_; }

 private:
  std::string item_id_;
  std::string cause_;
};

// Text encoding failed (remote error or degenerate input).
class EncodeFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace fitrep
