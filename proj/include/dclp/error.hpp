#pragma once

#include <stdexcept>
#include <string>

namespace dclp {

// Failure classes. The CLI maps each family to its own exit code.
enum class ErrorKind { Usage, Data, Io, Numeric, Internal };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(ErrorKind::Internal, "shape error: " + what) {}
};

/// Invalid hyperparameter or configuration value.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Usage, "config error: " + what) {}
};

/// Violated call contract (e.g. backward on a non-scalar).
class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error(ErrorKind::Internal, "contract error: " + what) {}
};

/// A vector whose norm is too small to normalize.
class DegenerateVectorError : public Error {
public:
    explicit DegenerateVectorError(const std::string& what)
        : Error(ErrorKind::Numeric, "degenerate vector: " + what) {}
};

/// Two evaluations of a supposedly deterministic function disagreed.
class DeterminismError : public Error {
public:
    explicit DeterminismError(const std::string& what) : Error(ErrorKind::Numeric, "determinism error: " + what) {}
};

class VocabularyError : public Error {
public:
    explicit VocabularyError(const std::string& what) : Error(ErrorKind::Data, "vocabulary error: " + what) {}
};

/// Malformed, missing or out-of-range input data.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, "data error: " + what) {}
};

class ParseError : public DataError {
public:
    using DataError::DataError;
};

class ValidationError : public DataError {
public:
    using DataError::DataError;
};

class DecodeError : public DataError {
public:
    using DataError::DataError;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, "io error: " + what) {}
};

class CheckpointError : public Error {
public:
    explicit CheckpointError(const std::string& what) : Error(ErrorKind::Data, "checkpoint error: " + what) {}
};

class BadMagicError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class TruncatedError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class VersionMismatchError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

/// Optimizer state does not match the parameter set.
class StateError : public Error {
public:
    explicit StateError(const std::string& what) : Error(ErrorKind::Internal, "state error: " + what) {}
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, "usage error: " + what) {}
};

}  // namespace dclp
