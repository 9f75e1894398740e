#pragma once

#include <stdexcept>
#include <string>

namespace evdispatch {

/// Malformed input document (network file, config file, checkpoint).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input parsed but violates a structural invariant (connectivity, spacing).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Inconsistent or unusable configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define EVD_REQUIRE(cond, msg)                              \
  do {                                                      \
    if (!(cond)) throw ::evdispatch::ContractError(msg);    \
  } while (0)

}  // namespace evdispatch
