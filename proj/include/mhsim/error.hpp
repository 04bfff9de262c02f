#pragma once

#include <stdexcept>
#include <string>

namespace mhsim {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data violates a documented invariant (CLI exit code 2).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Not enough usable data to compute an estimate.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Too many missing cells in a simulated week (CLI exit code 3).
class DataQualityError : public Error {
 public:
  using Error::Error;
};

// Retryable network or provider failure (CLI exit code 4 when it escapes).
class TransportError : public Error {
 public:
  using Error::Error;
};

// Credentials or request configuration rejected; never retried (exit code 4).
class AuthError : public Error {
 public:
  using Error::Error;
};

// On-disk run log does not belong to the supplied scenario.
class DigestMismatchError : public Error {
 public:
  using Error::Error;
};

// Raised by the engine when the caller's stop hook fires between chunks.
class RunInterrupted : public Error {
 public:
  using Error::Error;
};

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kConfig = 2;
inline constexpr int kDataQuality = 3;
inline constexpr int kProvider = 4;
}  // namespace exit_code

}  // namespace mhsim
