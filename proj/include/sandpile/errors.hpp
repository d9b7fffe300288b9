#ifndef SANDPILE_ERRORS_HPP
#define SANDPILE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sandpile {

// Root of everything the library throws on purpose.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

// Malformed input text (mesh or config files). Carries the 1-based line.
class FormatError : public Error {
public:
  FormatError(const std::string& what, int line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

private:
  int line_;
};

class ValidationError : public Error {
public:
  using Error::Error;
};

class GeometryError : public Error {
public:
  using Error::Error;
};

class EvaluationError : public Error {
public:
  using Error::Error;
};

// Indefinite or singular linear systems.
class NumericalError : public Error {
public:
  using Error::Error;
};

// Iterative method ran out of iterations. `residual` is the last value of
// whatever quantity the method was driving below tolerance.
class ConvergenceError : public Error {
public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

// Analytic solution queried outside the regime it is valid in.
class OutOfRegime : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  ConfigError(const std::string& key, const std::string& what)
      : Error(key.empty() ? what : key + ": " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

private:
  std::string key_;
};

class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace sandpile

#endif  // SANDPILE_ERRORS_HPP
