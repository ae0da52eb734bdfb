#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace piven {

/// Failure categories; the CLI maps each one to its own exit code.
enum class ErrorCategory { config, shape, data, divergence, io, internal };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(ErrorCategory::shape, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

/// Raised when a loss or parameter becomes non-finite during training.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t batch_index)
        : Error(ErrorCategory::divergence, what), batch_index_(batch_index) {}

    std::size_t batch_index() const noexcept { return batch_index_; }

private:
    std::size_t batch_index_;
};

class IoError : public Error {
public:
    IoError(const std::string& what, std::string path)
        : Error(ErrorCategory::io, what + ": " + path), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class InternalError : public Error {
public:
    explicit InternalError(const std::string& what) : Error(ErrorCategory::internal, what) {}
};

inline int exit_code(ErrorCategory c) noexcept {
    switch (c) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::shape: return 2;
    case ErrorCategory::data: return 3;
    case ErrorCategory::divergence: return 4;
    case ErrorCategory::io: return 5;
    case ErrorCategory::internal: return 1;
    }
    return 1;
}

inline void require_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw ShapeError(std::string(what) + ": length mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
    }
}

} // namespace piven
