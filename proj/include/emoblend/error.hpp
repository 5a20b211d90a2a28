#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace emoblend {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file content. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A value violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Two inputs that must agree in size or class space do not.
class DimensionError : public Error {
public:
    using Error::Error;
};

}  // namespace emoblend
