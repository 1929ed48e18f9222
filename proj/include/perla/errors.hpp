#ifndef PERLA_ERRORS_HPP_
#define PERLA_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace perla {

// Mismatched shapes, agent counts or invalid settings.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Out-of-range action indices, malformed arguments.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite parameters, logits or advantages.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Requested an oracle the environment cannot provide.
class UnsupportedOperation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace perla

#endif  // PERLA_ERRORS_HPP_
