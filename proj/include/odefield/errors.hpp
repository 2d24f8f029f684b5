#pragma once

#include <stdexcept>
#include <string>

namespace odefield {

/// Thrown when a dataset is too small for the requested operation
/// (e.g. splitting fewer than two trajectories).
class insufficient_data_error : public std::runtime_error {
public:
    explicit insufficient_data_error(const std::string& what)
        : std::runtime_error(what) {}
};

/// Thrown when numerical integration produces a non-finite state.
/// Carries the time at which the divergence was detected.
class integration_diverged_error : public std::runtime_error {
public:
    integration_diverged_error(const std::string& what, double time)
        : std::runtime_error(what), failing_time_(time) {}

    double failing_time() const noexcept { return failing_time_; }

private:
    double failing_time_;
};

/// Thrown on malformed experiment configuration files or values.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what)
        : std::runtime_error(what) {}
};

} // namespace odefield
