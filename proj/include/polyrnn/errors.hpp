#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace polyrnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FileError : public Error {
 public:
  using Error::Error;
};

// Trajectory/cache mismatch detected during the backward sweep.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. `position` is a byte offset for binary formats and
// a 1-based line number for text formats.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t position)
      : Error(what + " (at " + std::to_string(position) + ")"), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

// A non-finite value appeared. `step` is the timestep (or integration step)
// at which it was first observed.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 protected:
  struct Verbatim {};
  DivergenceError(Verbatim, const std::string& what, std::size_t step) : Error(what), step_(step) {}

 private:
  std::size_t step_;
};

}  // namespace polyrnn
