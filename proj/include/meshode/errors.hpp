#pragma once

#include <stdexcept>
#include <string>

namespace meshode {

// Shape disagreement between operands of a tensor op.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Violated precondition of an operation (caller bug).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Zero-length edge in an energy or feature computation.
class DegenerateEdgeError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Two adjacent rod segments folded back onto each other.
class SingularCurvatureError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int iterations, double residual)
      : std::runtime_error(what), iterations_(iterations), residual_(residual) {}
  int iterations() const { return iterations_; }
  double residual() const { return residual_; }

 private:
  int iterations_;
  double residual_;
};

// Non-finite value produced while rolling out a learned model.
class RolloutBlowupError : public std::runtime_error {
 public:
  RolloutBlowupError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// Malformed or truncated file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed inputs that do not belong together (e.g. a plate checkpoint
// applied to a rod trajectory).
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace meshode
