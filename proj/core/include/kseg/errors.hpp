#pragma once

#include <stdexcept>
#include <string>

namespace kseg {

/// Invalid configuration or arguments (maps to CLI exit code 2).
class validation_error : public std::invalid_argument {
public:
    explicit validation_error(const std::string& what) : std::invalid_argument(what) {}
};

/// File-system or serialization failure (maps to CLI exit code 3).
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

/// An operation was called on an object in the wrong state
/// (wrong domain tag, wrong model variant, unprepared exam).
class usage_error : public std::logic_error {
public:
    explicit usage_error(const std::string& what) : std::logic_error(what) {}
};

/// Numerically degenerate input (zero-energy volume etc).
class degenerate_input_error : public std::runtime_error {
public:
    explicit degenerate_input_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace kseg
