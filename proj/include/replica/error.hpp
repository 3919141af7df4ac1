#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace replica {

// Input problems: unreadable files, bad formats, invalid configuration.
// The CLI maps these to exit code 1.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what, std::vector<std::string> items = {})
      : std::runtime_error(what), items_(std::move(items)) {}

  // Offending paths / ids, for machine-readable reports.
  const std::vector<std::string>& items() const noexcept { return items_; }

 private:
  std::vector<std::string> items_;
};

class IngestError : public InputError {
 public:
  using InputError::InputError;
};

class FormatError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

// Violated preconditions of an operation (dimension mismatch, wrong clip
// length, background smaller than K, ...). Exit code 2 in the CLI.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace replica
