#pragma once

#include <stdexcept>
#include <string>

namespace hetcsma {

enum class ErrorKind {
    domain,         // argument outside a function's domain
    structural,     // malformed schedule, trace or dimension mismatch
    resource,       // enumeration or memory cap exceeded
    configuration,  // invalid parameters or scenario contents
    convergence,    // numerical non-convergence
    io,             // file system failures
};

/// Single exception type for the library; `kind()` lets callers map failures
/// to exit codes without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Thrown by the fixed-point solver; carries the drift at the last iterate.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double final_drift)
        : Error(ErrorKind::convergence, what), final_drift_(final_drift) {}

    double final_drift() const noexcept { return final_drift_; }

private:
    double final_drift_;
};

} // namespace hetcsma
