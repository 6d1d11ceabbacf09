#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace basics {

enum class ErrorKind {
  MalformedLine,
  UnknownMnemonic,
  DuplicateFunction,
  DanglingBranch,
  IllegalByteTransition,
  WriteOutsideStack,
  PopUnderflow,
  OverlappingBuffer,
  StateBudgetExceeded,
  UnknownLibc,
  EmulationDivergence,
  TargetUnreachable,
  IterationBudgetExhausted,
  IrreducibleLoop,
  SyntaxError,
  UnknownOperator,
  UnsupportedFragment,
  NoSinkFound,
  NoTemplate,
  AlreadyPatched,
  LabelCollision,
  StepBudgetExceeded,
  InvalidConfig,
  Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

/// Error carrying a 1-based source location (disassembly line, property column).
class LocatedError : public Error {
 public:
  LocatedError(ErrorKind kind, std::size_t line, std::size_t column, const std::string& message)
      : Error(kind, "line " + std::to_string(line) + ", col " + std::to_string(column) + ": " + message),
        line_(line),
        column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace basics
