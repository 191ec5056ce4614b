#pragma once

#include <stdexcept>
#include <string>

namespace marlbc {

/// Invalid parameters, malformed config documents, shape mismatches.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Calling an operation out of order (stepping past the horizon, updating
/// before the replay buffer is warm, backward on a stale cache).
class ProtocolError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// All effective capital or labour vanished, so factor prices are undefined.
class DegenerateEconomyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A training loss became non-finite. The message carries the diagnostic dump.
class TrainingDivergedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical solver failed an internal consistency check.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace marlbc
