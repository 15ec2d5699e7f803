#pragma once

#include <stdexcept>
#include <string>

namespace qfc {

// Raised when an iterative or series-based computation cannot reach the
// requested tolerance.
class ConvergenceError : public std::runtime_error {
public:
    explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid or inconsistent configuration (manifests, calibration files,
// scenario parameters). Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A correlation whose normalisation is zero (no photons / no baseline).
class UndefinedCorrelation : public std::domain_error {
public:
    explicit UndefinedCorrelation(const std::string& what) : std::domain_error(what) {}
};

}  // namespace qfc
