#ifndef ECFID_ERRORS_HPP
#define ECFID_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace ecfid {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid model/problem/configuration input (CLI exit code 2).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Requested operation not available for this model family (CLI exit code 2).
class UnsupportedError : public Error {
public:
    explicit UnsupportedError(const std::string& msg) : Error(msg) {}
};

/// Optimizer failed to converge on every start (CLI exit code 3).
class NonConvergenceError : public Error {
public:
    explicit NonConvergenceError(const std::string& msg) : Error(msg) {}
};

/// Sensitivity matrix is rank deficient; carries the null-space direction
/// so the caller can see which parameter combination is unidentifiable
/// (CLI exit code 4).
class IdentifiabilityError : public Error {
public:
    IdentifiabilityError(const std::string& msg, std::vector<double> direction)
        : Error(msg), null_direction(std::move(direction)) {}
    std::vector<double> null_direction;
};

} // namespace ecfid

#endif
