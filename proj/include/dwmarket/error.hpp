#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dwm {

/// Bad input to a pure operation: length mismatch, negative demand, zero-mean PAR.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine could not produce a certified answer.
class SolverFailure : public std::runtime_error {
 public:
  SolverFailure(const std::string& what, double residual = 0.0)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A device's constraints admit no plan (e.g. e_des exceeds the charging window).
class InfeasibleDevice : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Coordinator/agent message exchange went wrong. Names the offending endpoints when known.
class ProtocolError : public std::runtime_error {
 public:
  explicit ProtocolError(const std::string& what, std::vector<std::string> endpoints = {})
      : std::runtime_error(what), endpoints_(std::move(endpoints)) {}
  const std::vector<std::string>& endpoints() const noexcept { return endpoints_; }

 private:
  std::vector<std::string> endpoints_;
};

/// An internal identity that must hold by construction did not (e.g. conservation).
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Scenario validation failure. Carries every violation found, each prefixed by its locator.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> violations)
      : std::runtime_error(join(violations)), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "scenario validation failed";
    for (const auto& s : v) {
      out += "\n  ";
      out += s;
    }
    return out;
  }
  std::vector<std::string> violations_;
};

}  // namespace dwm
