#pragma once

#include <stdexcept>
#include <string>

namespace fracdim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A file could not be parsed under its declared format.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    explicit FormatError(const std::string& what) : Error(what) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_ = 0;
};

/// Filesystem read/write failure.
class IoError : public Error {
public:
    using Error::Error;
};

/// An operation produced nothing usable (empty mask, zero columns, too few curve points).
class EmptyResult : public Error {
public:
    using Error::Error;
};

/// Iterative solver did not reach its tolerance within the budget.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double achieved)
        : Error(what + " (achieved tolerance " + std::to_string(achieved) + ")"), achieved_(achieved) {}

    double achieved() const noexcept { return achieved_; }

private:
    double achieved_;
};

}  // namespace fracdim
