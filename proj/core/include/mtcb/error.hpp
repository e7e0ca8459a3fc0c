#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mtcb {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two vectors (or a vector and a declared dimension) disagree in size.
class DimensionError : public Error {
 public:
  DimensionError(const std::string& context, std::size_t expected, std::size_t actual)
      : Error(context + ": dimension mismatch (expected " + std::to_string(expected) +
              ", got " + std::to_string(actual) + ")"),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Unusable input data (empty datasets, unreadable trace files, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtcb
