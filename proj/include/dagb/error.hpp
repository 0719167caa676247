#pragma once

#include <stdexcept>
#include <string>

namespace dagb {

// Every failure raised by the library derives from Error, so front ends can
// map categories to exit codes without string matching.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Input did not match the expected table/file schema (missing column, bad magic).
class SchemaError : public Error {
public:
  using Error::Error;
};

// A data row could not be parsed; carries the 1-based line number.
class RowError : public Error {
public:
  RowError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

// A file could not be opened, read or written.
class IoError : public Error {
public:
  using Error::Error;
};

class FormatError : public Error {
public:
  using Error::Error;
};

// Binary payload shorter or longer than the header declares.
class LengthError : public Error {
public:
  using Error::Error;
};

// Grids that must be aligned are not.
class GeometryError : public Error {
public:
  using Error::Error;
};

// A value violates a documented domain (negative area, probability > 1, ...).
class RangeError : public Error {
public:
  using Error::Error;
};

class SingularDesignError : public Error {
public:
  using Error::Error;
};

// No candidate model passed the multicollinearity screen.
class SelectionInfeasibleError : public Error {
public:
  using Error::Error;
};

}  // namespace dagb
