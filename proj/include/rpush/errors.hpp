#pragma once

#include <stdexcept>
#include <string>

namespace rpush {

/// Topology failed a structural check (too few nodes, self-loop, not strongly connected).
class TopologyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A run configuration is malformed or cannot be realized.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A push-sum invariant that must be unreachable was violated (e.g. y <= 0).
class ProtocolViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A schedule handed to the oracle contradicts the delivery exclusions.
class InconsistentSchedule : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The oracle found a residual above tolerance.
class VerificationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A gradient or iterate became non-finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The reference optimum solver did not converge.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rpush
