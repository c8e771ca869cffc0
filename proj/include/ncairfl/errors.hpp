#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ncairfl {

// Base of every error the library raises. `kind()` is a stable short name the
// CLI prints before the message.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error("format_error", w) {}
};

struct ConsistencyError : Error {
  explicit ConsistencyError(const std::string& w) : Error("consistency_error", w) {}
};

struct LengthError : Error {
  explicit LengthError(const std::string& w) : Error("length_error", w) {}
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error("dimension_error", w) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error("domain_error", w) {}
};

struct ContractViolation : Error {
  explicit ContractViolation(const std::string& w) : Error("contract_violation", w) {}
};

struct NumericOverflowError : Error {
  explicit NumericOverflowError(const std::string& w) : Error("numeric_overflow", w) {}
};

struct InfeasiblePartitionError : Error {
  explicit InfeasiblePartitionError(const std::string& w)
      : Error("infeasible_partition", w) {}
};

struct IoError : Error {
  explicit IoError(const std::string& w) : Error("io_error", w) {}
};

// Validation failure tied to one configuration field.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& w)
      : Error("config_error", field + ": " + w), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Global model became non-finite after the update of round `round`.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(int round)
      : Error("divergence", "non-finite global model after round " + std::to_string(round)),
        round_(round) {}
  int round() const noexcept { return round_; }

 private:
  int round_;
};

inline void check_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": length " + std::to_string(a) +
                         " != " + std::to_string(b));
  }
}

}  // namespace ncairfl
