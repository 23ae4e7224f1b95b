#pragma once

#include <stdexcept>
#include <string>

namespace carted {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual const char* code() const noexcept { return "error"; }
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
    const char* code() const noexcept override { return "dimension"; }
};

/// An argument is outside its admissible range.
class ArgumentError : public Error {
public:
    using Error::Error;
    const char* code() const noexcept override { return "argument"; }
};

/// Singular systems, non-finite iterates and similar numerical failures.
class NumericError : public Error {
public:
    using Error::Error;
    const char* code() const noexcept override { return "numeric"; }
};

/// File-system and parse failures.
class IoError : public Error {
public:
    using Error::Error;
    const char* code() const noexcept override { return "io"; }
};

namespace detail {

inline void require_dims(bool ok, const std::string& msg) {
    if (!ok) throw DimensionError(msg);
}

inline void require_arg(bool ok, const std::string& msg) {
    if (!ok) throw ArgumentError(msg);
}

}  // namespace detail
}  // namespace carted
