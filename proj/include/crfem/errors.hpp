#pragma once

#include <stdexcept>
#include <string>

namespace crfem {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid mesh-generation or run parameters.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Degenerate or inverted triangle.
class GeometryError : public Error {
public:
    using Error::Error;
};

/// A caller violated a documented precondition (sizes, ranges, zero vectors).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Patch requested for a boundary edge.
class PatchError : public Error {
public:
    using Error::Error;
};

/// The shifted pencil A - sigma*M could not be factorized.
class ShiftError : public Error {
public:
    using Error::Error;
};

/// Eigen iteration ran out of restarts.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double best_residual)
        : Error(what), best_residual_(best_residual) {}

    double best_residual() const noexcept { return best_residual_; }

private:
    double best_residual_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed command line.
class UsageError : public Error {
public:
    using Error::Error;
};

} // namespace crfem
