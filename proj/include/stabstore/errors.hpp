#pragma once

#include <stdexcept>
#include <string>

namespace stabstore {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Grid or config document does not match the schema.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Grid document parsed but violates a structural invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Synthetic topology cannot be produced with the requested profile.
class GenerationError : public Error {
public:
    using Error::Error;
};

/// Scenario cannot be turned into a source fleet.
class AllocationError : public Error {
public:
    using Error::Error;
};

/// Network assembly or reduction failure.
class NetworkError : public Error {
public:
    using Error::Error;
};

/// Droop equilibrium not found.
class EquilibriumError : public Error {
public:
    EquilibriumError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Eigensolver, integrator or estimator failure.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Wraps an error raised inside one stage of the assessment pipeline.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace stabstore
