#pragma once

#include <stdexcept>
#include <string>

namespace jumpmfg {

// Exit codes used by the CLI: 0 pass, 1 check failure, 2 configuration error,
// 3 internal error.
enum class ExitCode : int { ok = 0, check_failure = 1, config_error = 2, internal_error = 3 };

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A model assumption was breached at runtime (e.g. an intensity density
// evaluated outside its declared bound).
struct ModelViolationError : std::runtime_error {
    explicit ModelViolationError(const std::string& what) : std::runtime_error(what) {}
};

struct SolverError : std::runtime_error {
    explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

struct LinalgError : std::runtime_error {
    explicit LinalgError(const std::string& what) : std::runtime_error(what) {}
};

struct SizeError : std::runtime_error {
    explicit SizeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace jumpmfg
