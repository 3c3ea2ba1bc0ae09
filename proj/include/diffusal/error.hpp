#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace diffusal {

/// Malformed or inconsistent input data. Carries the offending file and line
/// when the error comes from a parser.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string &what) : std::runtime_error(what) {}

    DataError(const std::string &file, std::size_t line, const std::string &what)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), file_(file),
          line_(line) {}

    const std::string &file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string file_;
    std::size_t line_ = 0;
};

/// Invalid parameters or configuration.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string &what) : std::invalid_argument(what) {}
};

namespace detail {

inline void require(bool condition, const std::string &message) {
    if (!condition)
        throw ConfigError(message);
}

} // namespace detail

} // namespace diffusal
