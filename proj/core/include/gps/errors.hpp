#pragma once

#include <stdexcept>
#include <string>

namespace gps {

enum class ErrorKind { Validation, Numerical, Infeasible };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Malformed input, bad shapes, bad configuration.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& message)
        : Error(ErrorKind::Validation, message) {}
};

// Singular or ill-conditioned linear algebra.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& message)
        : Error(ErrorKind::Numerical, message) {}
};

// The observed statistic is not inside its own truncation set.
class InfeasibleError : public Error {
public:
    explicit InfeasibleError(const std::string& message)
        : Error(ErrorKind::Infeasible, message) {}
};

// Process exit code for an error kind: 2 for validation, 3 otherwise.
int exit_code(ErrorKind kind) noexcept;

}  // namespace gps
