#pragma once

#include <stdexcept>
#include <string>

namespace relieve {

// Failure categories. They map one-to-one onto the C API status codes and the
// CLI exit codes (validation -> 1, numerical -> 2).
enum class ErrorKind {
  Domain,      // precondition on an argument violated
  Validation,  // malformed input data (files, manifests, problems)
  Numerical,   // non-finite values or divergence during optimization
  Io,          // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error domain_error(const std::string& what) { return Error(ErrorKind::Domain, what); }
inline Error validation_error(const std::string& what) { return Error(ErrorKind::Validation, what); }
inline Error numerical_error(const std::string& what) { return Error(ErrorKind::Numerical, what); }
inline Error io_error(const std::string& what) { return Error(ErrorKind::Io, what); }

}  // namespace relieve
