#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace mdm {

/// Position of a construct in a source file. Lines and columns are 1-based.
///
/// Spans are diagnostic metadata only: two ASTs that differ only in where
/// they were parsed from compare equal.
struct SourceSpan {
  std::string file;
  int line = 1;
  int column = 1;

  std::string to_string() const {
    std::string out = file.empty() ? std::string("<input>") : file;
    out += ':' + std::to_string(line) + ':' + std::to_string(column);
    return out;
  }

  friend bool operator==(const SourceSpan&, const SourceSpan&) { return true; }
};

/// Root of the library's exception hierarchy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lexical or syntactic error in a model or property file.
class ParseError : public Error {
 public:
  ParseError(SourceSpan span, const std::string& message)
      : Error(span.to_string() + ": " + message), span_(std::move(span)), message_(message) {}

  const SourceSpan& span() const noexcept { return span_; }
  const std::string& message() const noexcept { return message_; }

 private:
  SourceSpan span_;
  std::string message_;
};

/// Expression evaluation failure: unknown variable, arity or domain error.
class EvalError : public Error {
 public:
  using Error::Error;
};

/// Model is structurally unusable (failed validation, unresolved names, ...).
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Trap raised while running compiled CFG code.
class ExecError : public Error {
 public:
  ExecError(std::size_t instr, const std::string& message)
      : Error("instruction " + std::to_string(instr) + ": " + message), instr_(instr) {}

  std::size_t instruction() const noexcept { return instr_; }

 private:
  std::size_t instr_;
};

/// A simulation aborted; carries the mode and the 1-based period index.
class SimulationError : public Error {
 public:
  SimulationError(std::string mode, std::size_t period, const std::string& message)
      : Error("mode " + mode + ", period " + std::to_string(period) + ": " + message),
        mode_(std::move(mode)),
        period_(period) {}

  const std::string& mode() const noexcept { return mode_; }
  std::size_t period() const noexcept { return period_; }

 private:
  std::string mode_;
  std::size_t period_;
};

}  // namespace mdm
