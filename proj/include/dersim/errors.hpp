#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dersim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  DimensionError(const std::string& what, std::size_t expected, std::size_t actual)
      : Error(what + ": expected length " + std::to_string(expected) + ", got " +
              std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

/// Box inverted, bad coefficients, malformed graph and similar structural defects.
class InvalidInstanceError : public Error {
 public:
  using Error::Error;
};

/// Total demand falls outside [sum of lower caps, sum of upper caps].
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class InvalidCostError : public Error {
 public:
  using Error::Error;
};

/// A non-finite iterate appeared; usually the stepsize is too large.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

/// An internal invariant that should be impossible to break was broken.
class InvariantError : public Error {
 public:
  InvariantError(const std::string& what, std::size_t iteration)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column = 0)
      : Error("line " + std::to_string(line) +
              (column > 0 ? ", column " + std::to_string(column) : std::string{}) + ": " + what),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Rate fit requested on a window that contains non-positive values.
class WindowError : public Error {
 public:
  WindowError(const std::string& what, std::size_t suggested_start)
      : Error(what + "; try a window starting at k0 = " + std::to_string(suggested_start)),
        suggested_start_(suggested_start) {}

  std::size_t suggested_start() const noexcept { return suggested_start_; }

 private:
  std::size_t suggested_start_;
};

}  // namespace dersim
