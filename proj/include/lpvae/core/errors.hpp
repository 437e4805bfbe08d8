#pragma once

#include <stdexcept>
#include <string>

namespace lpvae {

// Invalid user-supplied configuration (bad dataset id, bad split spec, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset files missing or malformed.
class IngestError : public std::runtime_error {
 public:
  explicit IngestError(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller violated an operation's precondition (shape/dim mismatch, ...).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace lpvae
