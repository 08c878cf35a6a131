#pragma once

#include <stdexcept>
#include <string>

namespace laneflow {

/// Argument outside the domain on which a model function is defined.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Scheme or integrator failure (positivity loss, step too large, ordering violation).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LookupError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// Operation requested for a case it does not cover (e.g. decay rate of a class-C state).
struct NotApplicableError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Invalid scenario configuration. `line` is 0 when the error is not tied to a line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, int line = 0, std::string key = {})
      : std::runtime_error(format(message, line, key)), line_(line), key_(std::move(key)) {}

  int line() const noexcept { return line_; }
  const std::string& key() const noexcept { return key_; }

 private:
  static std::string format(const std::string& message, int line, const std::string& key) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (!key.empty()) out += "key '" + key + "': ";
    return out + message;
  }

  int line_;
  std::string key_;
};

}  // namespace laneflow
