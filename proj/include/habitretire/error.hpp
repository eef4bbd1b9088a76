#pragma once

#include <stdexcept>
#include <string>

namespace habitretire {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    /// Short machine-readable category (used by the CLI error line).
    virtual const char* kind() const noexcept { return "error"; }
};

/// Argument outside the documented domain of a time function or map.
class DomainError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "domain_error"; }
};

/// Parameter combination the model does not support (for example gamma == 1).
class UnsupportedParameter : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "unsupported_parameter"; }
};

/// A standing model assumption fails; carries the offending value.
class AssumptionViolation : public Error {
public:
    AssumptionViolation(const std::string& what, double value)
        : Error(what), value_(value) {}
    const char* kind() const noexcept override { return "assumption_violation"; }
    double value() const noexcept { return value_; }

private:
    double value_;
};

/// The reduced process Z has zero diffusion, so the lognormal machinery breaks down.
class DegenerateProcess : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "degenerate_process"; }
};

/// Root finder, LCP iteration or another numerical routine failed to converge.
class SolverFailure : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "solver_failure"; }
};

/// Exercise set is not a single ray in z on some time slice.
class StructureViolation : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "structure_violation"; }
};

/// Primal state outside the allowed region x - pT h + q w > 0.
class InfeasibleState : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "infeasible_state"; }
};

/// Query point outside the solved grid on the continuation side.
class ExtrapolationError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "extrapolation_error"; }
};

}  // namespace habitretire
