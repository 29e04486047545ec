#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rodenet {

// Every library failure carries a short machine-readable category so the CLI
// can report it alongside the human message.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}
  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& what) : Error("contract", what) {}
};

class LookupError : public Error {
 public:
  explicit LookupError(const std::string& what) : Error("lookup", what) {}
};

/// Raised when a rollout or integration leaves the finite/bounded regime.
class BlowUpError : public Error {
 public:
  BlowUpError(std::size_t step, const std::string& what)
      : Error("blow_up", what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error("training", what) {}
};

class SpecError : public Error {
 public:
  explicit SpecError(const std::string& what) : Error("spec", what) {}
};

class UnsupportedPolynomial : public Error {
 public:
  explicit UnsupportedPolynomial(const std::string& what)
      : Error("unsupported_polynomial", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class DependencyError : public Error {
 public:
  explicit DependencyError(const std::string& what) : Error("dependency", what) {}
};

class EvaluationError : public Error {
 public:
  explicit EvaluationError(const std::string& what) : Error("evaluation", what) {}
};

}  // namespace rodenet
