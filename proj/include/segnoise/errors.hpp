#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace segnoise {

// Base class for all library errors. CLI maps these to exit code 1,
// config/usage problems to exit code 2.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid arguments to an operation (shape mismatch, bad scale, ...).
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

// A curve fit was requested on fewer defined points than min_points.
class NotEnoughDataError : public Error {
public:
    explicit NotEnoughDataError(const std::string& msg) : Error(msg) {}
};

// Configuration file problems. Carries the full list of violations so a
// CLI user sees every problem at once, not just the first.
class ConfigError : public Error {
public:
    ConfigError(const std::string& msg, std::vector<std::string> problems)
        : Error(msg), problems_(std::move(problems)) {}
    explicit ConfigError(const std::string& msg) : Error(msg) {}
    const std::vector<std::string>& problems() const { return problems_; }

private:
    std::vector<std::string> problems_;
};

namespace io {

// On-disk format error taxonomy. Each failure mode is a distinct type so
// callers (and tests) can tell them apart.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

class BadMagicError : public FormatError {
public:
    explicit BadMagicError(const std::string& msg) : FormatError(msg) {}
};

class VersionError : public FormatError {
public:
    explicit VersionError(const std::string& msg) : FormatError(msg) {}
};

class TruncationError : public FormatError {
public:
    explicit TruncationError(const std::string& msg) : FormatError(msg) {}
};

class CountMismatchError : public FormatError {
public:
    explicit CountMismatchError(const std::string& msg) : FormatError(msg) {}
};

class FileError : public Error {
public:
    explicit FileError(const std::string& msg) : Error(msg) {}
};

}  // namespace io

}  // namespace segnoise
