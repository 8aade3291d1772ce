#pragma once

#include <stdexcept>
#include <string>

namespace odmix {

/// Error categories double as CLI exit codes.
enum class ErrorCategory : int {
    validation = 2,
    dependency = 3,
    numerical = 4,
    convergence = 5,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

/// Argument outside the mathematical domain of a function or distribution.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(ErrorCategory::validation, what) {}
};

/// Malformed input data or configuration.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorCategory::validation, what) {}
};

/// A required upstream artifact is missing.
class DependencyError : public Error {
public:
    explicit DependencyError(const std::string& what) : Error(ErrorCategory::dependency, what) {}
};

/// Overflow, non-finite evaluations, singular matrices.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorCategory::numerical, what) {}
};

/// Optimizer or sampler failed to reach a usable state.
class ConvergenceError : public Error {
public:
    explicit ConvergenceError(const std::string& what) : Error(ErrorCategory::convergence, what) {}
};

/// Demand that the network cannot carry, e.g. an unreachable destination.
class AssignmentError : public Error {
public:
    explicit AssignmentError(const std::string& what) : Error(ErrorCategory::validation, what) {}
};

}  // namespace odmix
