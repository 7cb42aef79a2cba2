#pragma once

#include <stdexcept>
#include <string>

namespace fe2e {

// Failure categories, aligned with the CLI exit codes.
enum class Status : int {
    Ok = 0,
    Usage = 1,    // bad flags, bad config values
    Io = 2,       // file errors, corruption, checksum mismatch
    Numeric = 3,  // domain errors, degenerate inputs, contract violations
};

class LabError : public std::runtime_error {
public:
    LabError(Status status, const std::string& message)
        : std::runtime_error(message), status_(status) {}

    Status status() const noexcept { return status_; }

private:
    Status status_;
};

[[noreturn]] inline void throw_usage(const std::string& msg) { throw LabError(Status::Usage, msg); }
[[noreturn]] inline void throw_io(const std::string& msg) { throw LabError(Status::Io, msg); }
[[noreturn]] inline void throw_numeric(const std::string& msg) { throw LabError(Status::Numeric, msg); }

}  // namespace fe2e
