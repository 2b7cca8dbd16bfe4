#pragma once

#include <stdexcept>
#include <string>

namespace fedsel {

// Invalid configuration or mismatched dimensions. `field` names the offending
// config key when the error originates from user input.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what, std::string field = {})
      : std::invalid_argument(field.empty() ? what : field + ": " + what),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Dirichlet size allocation could not meet its residual tolerance.
class PartitionError : public std::runtime_error {
 public:
  PartitionError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Scalar projection onto a zero-norm direction.
class ProjectionUndefined : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// GPCB score requested for an arm with no pulls.
class UnpulledArm : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace fedsel
