#pragma once

#include <stdexcept>
#include <string>

namespace ndtfuse {

/// Base class for all toolkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidCoordinate : Error {
  using Error::Error;
};

struct EmptyMap : Error {
  using Error::Error;
};

struct TooFewPoints : Error {
  using Error::Error;
};

struct DegenerateHessian : Error {
  using Error::Error;
};

struct AlignmentFailure : Error {
  using Error::Error;
};

struct NonPositiveDt : Error {
  using Error::Error;
};

struct SingularInnovation : Error {
  using Error::Error;
};

struct MapRequired : Error {
  using Error::Error;
};

struct StreamEmpty : Error {
  using Error::Error;
};

struct InsufficientData : Error {
  using Error::Error;
};

struct TrajectoryLeavesBounds : Error {
  using Error::Error;
};

struct OdometryLost : Error {
  using Error::Error;
};

struct InsufficientOverlap : Error {
  using Error::Error;
};

struct EmptySeries : Error {
  using Error::Error;
};

struct IoFailure : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace ndtfuse
