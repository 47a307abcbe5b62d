#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace radkg {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. `line` is 1-based over physical lines, 0 when unknown.
class ParseError : public Error {
public:
    ParseError(std::string source, std::size_t line, const std::string& what)
        : Error(format(source, line, what)), source_(std::move(source)), line_(line) {}

    const std::string& source() const noexcept { return source_; }
    std::size_t line() const noexcept { return line_; }

private:
    static std::string format(const std::string& source, std::size_t line, const std::string& what) {
        std::string out = source.empty() ? std::string("<input>") : source;
        if (line != 0) out += ":" + std::to_string(line);
        return out + ": " + what;
    }

    std::string source_;
    std::size_t line_;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class BoundsError : public Error {
public:
    using Error::Error;
};

class InvalidEntityError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced during training or a failed numerical check.
class NumericalError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

}  // namespace radkg
