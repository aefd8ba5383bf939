#pragma once

#include <stdexcept>
#include <string>

namespace crumq {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
  public:
    using Error::Error;
};

/// Malformed on-disk data (records, fixtures, index files).
class FormatError : public Error {
  public:
    using Error::Error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Failure talking to a model or feed provider. `retryable` marks transient
/// failures (transport errors, rate limits, 5xx) that a retry loop may absorb.
class ProviderError : public Error {
  public:
    ProviderError(const std::string& what, bool retryable)
        : Error(what), retryable_(retryable) {}

    bool retryable() const noexcept { return retryable_; }

  private:
    bool retryable_;
};

/// The model declined to answer (content filter or explicit refusal).
class RefusalError : public ProviderError {
  public:
    explicit RefusalError(const std::string& what) : ProviderError(what, false) {}
};

}  // namespace crumq
