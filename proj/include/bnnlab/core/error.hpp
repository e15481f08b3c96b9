#pragma once

#include <stdexcept>
#include <string>

namespace bnnlab {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error("domain error: " + what) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error("shape error: " + what) {}
};

/// A documented precondition was violated by the caller.
class ContractViolation : public Error {
public:
    explicit ContractViolation(const std::string& what) : Error("contract violation: " + what) {}
};

/// Division by a zero standard deviation or a zero scale.
class SingularityError : public Error {
public:
    explicit SingularityError(const std::string& what) : Error("singularity: " + what) {}
};

/// NaN or Inf produced where finite values are required.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error("numeric error: " + what) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error("format error: " + what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("I/O error: " + what) {}
};

}  // namespace bnnlab
