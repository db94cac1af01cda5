#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace jigsawhsi {

/// Base of every error raised by the library. The message is prefixed with
/// the tag of the module that raised it ("hsi-io: ...").
class Error : public std::runtime_error {
 public:
  Error(std::string_view module, const std::string& message)
      : std::runtime_error(std::string(module) + ": " + message), module_(module) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

/// Filesystem or payload problems (missing files, short reads, unwritable paths).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Bad arguments, violated preconditions, malformed configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace jigsawhsi
