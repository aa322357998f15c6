#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace fmdt {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Raised when a stateful component is driven out of order.
class ContractViolation : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

class DegenerateGeometry : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Task-graph construction and execution.

class GraphCycleError : public Error {
public:
    using Error::Error;
};

class BindingError : public Error {
public:
    using Error::Error;
};

class TypeMismatchError : public Error {
public:
    using Error::Error;
};

class ReplicationRefused : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// A task threw while processing a frame; the original message is kept.
class TaskError : public Error {
public:
    TaskError(std::string task, const std::string& what)
        : Error("task '" + task + "' failed: " + what), task_(std::move(task)) {}

    const std::string& task() const noexcept { return task_; }

private:
    std::string task_;
};

} // namespace fmdt
