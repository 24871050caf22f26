#pragma once

#include <stdexcept>
#include <string>

namespace aid {

/// Parameter outside the domain of a model formula (probability > 1, q0 == q1, ...).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Solver or estimator failed to produce a trustworthy number.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent run configuration. `path` names the offending field.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& what)
        : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace aid
