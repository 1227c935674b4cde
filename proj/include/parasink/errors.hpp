#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace parasink {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid workload profile or domain value; the message names the field.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Event products do not match the columns of a store.
class SchemaMismatchError : public Error {
 public:
  using Error::Error;
};

/// Checksum or codec stream failure while decoding.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// Structurally malformed basket or container.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in the wrong lifecycle phase (after finalize, twice, ...).
class LifecycleError : public Error {
 public:
  using Error::Error;
};

/// API misuse such as reconfiguring IMT after first use.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Bad module graph or run configuration.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// Output sink rejected a write.
class SinkError : public Error {
 public:
  using Error::Error;
};

/// A module threw while processing an event.
class ModuleFailure : public Error {
 public:
  ModuleFailure(std::string module, std::uint64_t event_id, const std::string& what)
      : Error("module '" + module + "' failed on event " + std::to_string(event_id) + ": " + what),
        module_(std::move(module)),
        event_id_(event_id) {}

  const std::string& module() const noexcept { return module_; }
  std::uint64_t event_id() const noexcept { return event_id_; }

 private:
  std::string module_;
  std::uint64_t event_id_;
};

}  // namespace parasink
