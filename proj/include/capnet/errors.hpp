#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace capnet {

// Base for caller mistakes (bad shapes, bad values, bad config). CLI maps
// these to exit code 1.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : ValidationError {
    explicit DimensionError(const std::string& msg) : ValidationError(msg) {}
};

struct DomainError : ValidationError {
    explicit DomainError(const std::string& msg) : ValidationError(msg) {}
};

struct VocabularyError : ValidationError {
    explicit VocabularyError(const std::string& msg) : ValidationError(msg) {}
};

struct ConfigError : ValidationError {
    explicit ConfigError(const std::string& msg) : ValidationError(msg) {}
};

// Optimizer/checkpoint state inconsistent with the parameters it claims to
// describe.
struct StateError : ValidationError {
    explicit StateError(const std::string& msg) : ValidationError(msg) {}
};

struct GenerationError : ValidationError {
    explicit GenerationError(const std::string& msg) : ValidationError(msg) {}
};

// Non-finite loss during gradient checking or training.
struct EvaluationError : std::runtime_error {
    explicit EvaluationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Base for file problems. CLI maps these to exit code 2.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed binary payload; carries the byte offset of the first bad byte.
struct FormatError : IoError {
    FormatError(const std::string& msg, std::size_t byte_offset)
        : IoError(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    std::size_t offset;
};

}  // namespace capnet
