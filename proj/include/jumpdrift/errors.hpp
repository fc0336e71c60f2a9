#pragma once

#include <stdexcept>
#include <string>

namespace jumpdrift {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad plan, preset or missing constant. The CLI maps this to exit code 3.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// A coefficient function returned a non-finite value.
class ModelEvaluationError : public Error {
public:
    using Error::Error;
};

class InfiniteMomentError : public Error {
public:
    using Error::Error;
};

/// A coefficient or jump-law assumption needed by the requested computation fails.
class AssumptionViolationError : public Error {
public:
    using Error::Error;
};

/// The simulated state left the finite range.
class ExplosionError : public Error {
public:
    ExplosionError(const std::string& what, double time) : Error(what), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

class InstrumentationRequiredError : public Error {
public:
    using Error::Error;
};

class KernelConstructionError : public Error {
public:
    KernelConstructionError(const std::string& what, int moment) : Error(what), moment_(moment) {}
    int moment_index() const noexcept { return moment_; }

private:
    int moment_;
};

class EmptyGridError : public Error {
public:
    using Error::Error;
};

class MissingJumpLogError : public Error {
public:
    using Error::Error;
};

class AlignmentError : public Error {
public:
    using Error::Error;
};

/// Too many failed replications. The CLI maps this to exit code 2.
class ExperimentError : public Error {
public:
    using Error::Error;
};

}  // namespace jumpdrift
