#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace aesq {

// Malformed binary file (bad magic, bad version, truncation).
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t byte_offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
          byte_offset_(byte_offset) {}

    std::size_t byte_offset() const { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

// SRCC/PLCC on constant input has no defined value.
class UndefinedCorrelationError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

}  // namespace aesq
