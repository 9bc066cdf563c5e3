#pragma once

#include <stdexcept>
#include <string>

namespace rppgm {

// Root of every error raised by the library. Callers that only need a message
// can catch this; the CLI maps subclasses to exit statuses.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration or argument values (CLI exit status 1).
class ConfigError : public Error {
public:
    ConfigError(std::string pointer, const std::string& message)
        : Error(pointer + ": " + message), pointer_(std::move(pointer)) {}

    const std::string& pointer() const noexcept { return pointer_; }

private:
    std::string pointer_;
};

// A quantity became NaN/Inf, or an update produced non-finite parameters
// (CLI exit status 3).
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace rppgm
