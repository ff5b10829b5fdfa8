#pragma once

#include <stdexcept>
#include <string>

namespace mmflow {

// common base so callers can catch everything from this library at once
struct Error : std::runtime_error {
  explicit Error(const std::string& what_arg) : std::runtime_error(what_arg) {}
};

#define MMFLOW_DEFINE_ERROR(Name)                   \
  struct Name : Error {                             \
    explicit Name(const std::string& what_arg)      \
        : Error(std::string(#Name) + ": " + what_arg) {} \
  }

// parameter and input validation
MMFLOW_DEFINE_ERROR(OutOfRange);
MMFLOW_DEFINE_ERROR(NegativeConfinement);
MMFLOW_DEFINE_ERROR(BadDimension);

// quantile / eulerian state handling
MMFLOW_DEFINE_ERROR(MismatchedResolution);
MMFLOW_DEFINE_ERROR(NonpositiveScale);
MMFLOW_DEFINE_ERROR(DegenerateState);
MMFLOW_DEFINE_ERROR(MassNotNormalized);
MMFLOW_DEFINE_ERROR(ZeroDensityPlateau);
MMFLOW_DEFINE_ERROR(GridMismatch);
MMFLOW_DEFINE_ERROR(InsufficientDerivatives);

// stationary profiles
MMFLOW_DEFINE_ERROR(NoStationaryState);
MMFLOW_DEFINE_ERROR(BisectionFailure);

// minimizing movement inner solver
MMFLOW_DEFINE_ERROR(InnerSolverDiverged);
MMFLOW_DEFINE_ERROR(MonotonicityViolation);
MMFLOW_DEFINE_ERROR(NonfiniteObjective);

// reference flows
MMFLOW_DEFINE_ERROR(Blowup);
MMFLOW_DEFINE_ERROR(InsufficientDecay);
MMFLOW_DEFINE_ERROR(NotSymmetric);
MMFLOW_DEFINE_ERROR(ZeroVector);

// diagnostics and drivers
MMFLOW_DEFINE_ERROR(InsufficientSignal);
MMFLOW_DEFINE_ERROR(NegativeStep);
MMFLOW_DEFINE_ERROR(UnknownKind);
MMFLOW_DEFINE_ERROR(ConfigParse);
MMFLOW_DEFINE_ERROR(Io);

#undef MMFLOW_DEFINE_ERROR

}  // namespace mmflow
