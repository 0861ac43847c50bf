#pragma once

#include <stdexcept>
#include <string>

namespace baae {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value falls outside the domain of an operation (log of a non-positive
/// number, sqrt of a negative number).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A dataset, manifest or checkpoint is malformed. `field()` names the
/// offending entry.
class DataError : public Error {
 public:
  DataError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Training diverged (a loss term became NaN or infinite).
class TrainingError : public Error {
 public:
  TrainingError(std::string term, int epoch, const std::string& what)
      : Error(what), term_(std::move(term)), epoch_(epoch) {}

  const std::string& term() const noexcept { return term_; }
  int epoch() const noexcept { return epoch_; }

 private:
  std::string term_;
  int epoch_;
};

}  // namespace baae
