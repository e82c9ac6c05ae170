#pragma once

#include <stdexcept>
#include <string>

namespace pure {

// Unreadable input or a dataset too corrupt to trust.
class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration, unknown identifiers, impossible sampling requests.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// The backend kept answering with schema-invalid output.
class ParseExhausted : public std::runtime_error {
 public:
  ParseExhausted(const std::string& what, std::string last_raw, int attempts)
      : std::runtime_error(what), last_raw_(std::move(last_raw)), attempts_(attempts) {}

  const std::string& last_raw() const { return last_raw_; }
  int attempts() const { return attempts_; }

 private:
  std::string last_raw_;
  int attempts_;
};

// Transport failed after every retry.
class BackendUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pure
