#ifndef MALAKIT_ERRORS_HPP
#define MALAKIT_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace malakit {

// Precondition violations use std::invalid_argument directly. The types
// below cover the runtime failure modes that callers may want to tell apart.

class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(const std::string& what, std::vector<std::size_t> coords)
      : std::runtime_error(what), coords_(std::move(coords)) {}
  const std::vector<std::size_t>& coordinates() const { return coords_; }

 private:
  std::vector<std::size_t> coords_;
};

class UnsupportedTarget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EstimationFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptySupport : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FitFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace malakit

#endif
