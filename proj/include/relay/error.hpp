#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace relay {

// Bad argument shapes, non-finite inputs, malformed course or config files.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// API called out of order (backward before forward, step after done, ...).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Corrupt or incompatible checkpoint bytes.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical update produced non-finite values and was rejected.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training budget exhausted without reaching the required success rate.
class TrainingFailure : public std::runtime_error {
 public:
  TrainingFailure(const std::string& what, std::vector<double> curve)
      : std::runtime_error(what), curve_(std::move(curve)) {}

  const std::vector<double>& curve() const noexcept { return curve_; }

 private:
  std::vector<double> curve_;
};

}  // namespace relay
