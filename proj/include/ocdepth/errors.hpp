#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ocdepth {

// Stable process exit codes shared by the CLI and scripts.
enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitIo = 2,
};

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct BehindCamera : std::domain_error {
  using std::domain_error::domain_error;
};

struct UndefinedDirection : std::domain_error {
  using std::domain_error::domain_error;
};

/// Structural problem with a text record (wrong field count, missing key).
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A field that should be numeric could not be read.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string field, std::size_t line, std::string token)
      : std::runtime_error("line " + std::to_string(line) + ": cannot parse field '" + field +
                           "' from '" + token + "'"),
        field_(std::move(field)),
        line_(line) {}

  const std::string& field() const noexcept { return field_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string field_;
  std::size_t line_;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(int step)
      : std::runtime_error("loss became non-finite at step " + std::to_string(step)), step_(step) {}

  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace ocdepth
