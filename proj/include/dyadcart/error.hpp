#pragma once

#include <stdexcept>
#include <string>

namespace dyadcart {

/// Broad failure classes; the CLI maps them onto exit codes.
enum class ErrorKind { usage, validation, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error validation_error(const std::string& what) {
  return Error(ErrorKind::validation, what);
}
inline Error io_error(const std::string& what) {
  return Error(ErrorKind::io, what);
}
inline Error usage_error(const std::string& what) {
  return Error(ErrorKind::usage, what);
}

}  // namespace dyadcart
