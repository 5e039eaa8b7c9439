#pragma once

#include <stdexcept>
#include <string>

namespace headgan {

/// Bad configuration (unknown keys, malformed files, invalid flag combos).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad or missing input data (files, containers, datasets, checkpoints).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Failure while running (non-finite losses, I/O mid-run, ...).
struct RunError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Process exit codes used by the CLI. 1 is reserved for flag parsing.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;

}  // namespace headgan
