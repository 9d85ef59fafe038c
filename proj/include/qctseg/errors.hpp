#pragma once

#include <stdexcept>
#include <string>

namespace qct {

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration value or unknown key. `key()` names the offending entry.
class ConfigError : public Error {
public:
  ConfigError(std::string key, const std::string &what)
      : Error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
  const std::string &key() const noexcept { return key_; }

private:
  std::string key_;
};

/// Unreadable, missing or malformed input files.
class InputError : public Error {
public:
  using Error::Error;
};

/// A pipeline stage failed on valid input (no canal, separation undefined, ...).
class PipelineError : public Error {
public:
  using Error::Error;
};

} // namespace qct
