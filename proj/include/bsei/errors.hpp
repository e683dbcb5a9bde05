#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bsei {

/// Argument outside the mathematical domain of a law (e.g. r < 1).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Parameter validation failure. `invariant` distinguishes a well-formed
/// value that breaks a cross-field invariant (w0 >= w1) from a malformed
/// or missing field.
class ValidationError : public std::invalid_argument {
public:
    ValidationError(std::string message, std::vector<std::string> fields, bool invariant = false)
        : std::invalid_argument(std::move(message)), fields_(std::move(fields)), invariant_(invariant) {}

    const std::vector<std::string>& fields() const noexcept { return fields_; }
    bool is_invariant() const noexcept { return invariant_; }

private:
    std::vector<std::string> fields_;
    bool invariant_;
};

/// Caller broke a precondition of an operation (grid mismatch, too few windows, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed input file; `line` is 1-based, 0 when not applicable.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& message, std::size_t line)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Requested band or window lies outside the spectral coverage.
class CoverageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure: non-finite values, non-convergence.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace bsei
