#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace vkde {

//! Raised when a numerical precondition fails (non-SPD covariance, singular
//! bandwidth, zero density at a selection point, ...). Carries the index of
//! the offending sample when one is known.
class DomainError : public std::domain_error
{
public:
  explicit DomainError(const std::string& what,
                       std::optional<std::size_t> index = std::nullopt)
    : std::domain_error(what)
    , index_(index)
  {}

  std::optional<std::size_t> index() const { return index_; }

private:
  std::optional<std::size_t> index_;
};

//! Malformed input file. `line()` is 1-based; 0 when not line specific.
class ParseError : public std::runtime_error
{
public:
  ParseError(const std::string& what, std::size_t line = 0)
    : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")"
                              : what)
    , line_(line)
  {}

  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

//! Invalid run configuration (unknown keys, out-of-range parameters).
class ConfigError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

} // namespace vkde
