#ifndef ADJGP_ERROR_HPP_
#define ADJGP_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace adjgp {

// Base class of every error the library throws. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operands live on different grids, or lengths/dimensions disagree.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// A geometric request (window, region) does not touch the domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid parameters or configuration, including CFL violations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Factorization failures, rank deficiency, ill-conditioning.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A time stepper produced a non-finite value.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"),
        detail_(what),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }
  // The message without the step suffix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::size_t step_;
};

}  // namespace adjgp

#endif  // ADJGP_ERROR_HPP_
