#pragma once

#include <stdexcept>
#include <string>

namespace bc {

// Vector lengths or coefficient counts disagree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An argument lies outside the domain of an operation (t outside [0,1],
// a <= 0, bad index range, zero reflection vector, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Configuration rejected; the message starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error(field.empty() ? what : field + ": " + what),
        field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bc
