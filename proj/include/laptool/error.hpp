#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace laptool {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the operation's domain (index >= K, empty sequence, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Label vector that is not one of the retained superclasses.
class OutOfVocabulary : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Operation called in the wrong state (e.g. backward before forward).
class StateError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or gradient.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Lookup of a frame that is not in the feature store.
class LookupError : public Error {
public:
    using Error::Error;
};

using WarningHandler = std::function<void(const std::string&)>;

/// Routes a warning to the installed handler (stderr by default).
void warn(const std::string& message);

/// Installs `handler` and returns the previous one. Pass nullptr to restore stderr.
WarningHandler set_warning_handler(WarningHandler handler);

}  // namespace laptool
