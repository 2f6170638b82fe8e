#pragma once

#include <stdexcept>
#include <string>

namespace ctrw {

// Input violates a documented precondition or file-format rule.
// CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// An estimator failed numerically (e.g. RANSAC consensus below the minimum
// inlier ratio). CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ctrw
