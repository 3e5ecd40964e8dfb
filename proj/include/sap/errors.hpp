#pragma once

#include <stdexcept>
#include <string>

namespace sap {

/// Thrown when a matrix is structurally singular: an empty row, or no
/// perfect row-to-column matching exists.
class StructuralSingularityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown when preconditioner construction cannot complete (e.g. a reduced
/// interface block is singular even after pivot boosting).
class PreconditionerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown by file readers. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg, long line = -1)
        : std::runtime_error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
          line_(line) {}

    long line() const noexcept { return line_; }

private:
    long line_;
};

}  // namespace sap
