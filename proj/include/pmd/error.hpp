#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pmd {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad arguments, violated preconditions, invalid config.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Config-file problems. `key` names the offending entry (JSON pointer style)
/// and `line` is 1-based when the failure is a syntax error, 0 otherwise.
class ConfigError : public ValidationError {
public:
    ConfigError(std::string key, const std::string& what, std::size_t line = 0)
        : ValidationError(what), key_(std::move(key)), line_(line) {}

    const std::string& key() const noexcept { return key_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string key_;
    std::size_t line_;
};

/// A numerical procedure could not produce a trustworthy result.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// The tridiagonal system lost diagonal dominance or hit a zero pivot.
class SingularSystemError : public NumericalError {
public:
    SingularSystemError(const std::string& what, double peclet)
        : NumericalError(what), peclet_(peclet) {}
    double peclet() const noexcept { return peclet_; }

private:
    double peclet_;
};

/// Iterative solver stopped at max_iter without meeting its tolerance.
class NonConvergenceError : public NumericalError {
public:
    NonConvergenceError(const std::string& what, std::vector<double> history)
        : NumericalError(what), history_(std::move(history)) {}
    const std::vector<double>& residual_history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

/// Howard iteration revisited an action selection without reducing the residual.
class CyclingError : public NonConvergenceError {
public:
    using NonConvergenceError::NonConvergenceError;
};

/// Time integration produced a non-finite state or violated its step bound.
class InstabilityError : public NumericalError {
public:
    InstabilityError(const std::string& what, std::size_t step, double max_abs)
        : NumericalError(what), step_(step), max_abs_(max_abs) {}
    std::size_t step() const noexcept { return step_; }
    double max_abs() const noexcept { return max_abs_; }

private:
    std::size_t step_;
    double max_abs_;
};

} // namespace pmd
