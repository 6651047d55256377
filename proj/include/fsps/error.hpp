#pragma once

#include <stdexcept>
#include <string>

namespace fsps {

/// Input outside the documented domain of an operation.
class DomainError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A generator was asked for more events than the configured cap allows.
class CapacityError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed configuration or data file. `where` names the field or line.
class ParseError : public std::runtime_error {
  public:
    ParseError(std::string where, const std::string& what)
        : std::runtime_error(where + ": " + what), where_(std::move(where)) {}

    const std::string& where() const noexcept { return where_; }

  private:
    std::string where_;
};

namespace detail {

inline void require(bool ok, const char* message) {
    if (!ok) throw DomainError(message);
}

inline void require(bool ok, const std::string& message) {
    if (!ok) throw DomainError(message);
}

}  // namespace detail
}  // namespace fsps
