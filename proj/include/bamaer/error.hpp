#pragma once

#include <stdexcept>
#include <string>

namespace bamaer {

// Broad failure classes; the CLI maps each onto an exit code.
enum class ErrorClass { Validation, Numeric, Io };

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
    ErrorClass error_class() const noexcept { return cls_; }

private:
    ErrorClass cls_;
};

class ShapeMismatch : public Error {
public:
    explicit ShapeMismatch(const std::string& what) : Error(ErrorClass::Validation, "shape mismatch: " + what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorClass::Numeric, what) {}
};

class IoFailure : public Error {
public:
    explicit IoFailure(const std::string& what) : Error(ErrorClass::Io, "I/O failure: " + what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorClass::Validation, "config: " + what) {}
};

}  // namespace bamaer
