#pragma once

#include <stdexcept>
#include <string>

namespace tmc {

// Caller passed something inconsistent (shape, mode index, rank, tag).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Eigensolver failure or a non-finite intermediate.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed container, truncated payload, unknown tags.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// External encoder could not be spawned, exited non-zero or timed out.
class BackendError : public std::runtime_error {
public:
    BackendError(const std::string& what, std::string command, std::string diagnostics = {})
        : std::runtime_error(what), command_(std::move(command)), diagnostics_(std::move(diagnostics)) {}

    const std::string& command() const noexcept { return command_; }
    const std::string& diagnostics() const noexcept { return diagnostics_; }

private:
    std::string command_;
    std::string diagnostics_;
};

}  // namespace tmc
