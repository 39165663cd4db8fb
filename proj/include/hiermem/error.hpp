// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hiermem {

// Error taxonomy. The CLI maps each class to a distinct exit code and the
// service maps them to HTTP statuses, so throw the most specific one.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad or inconsistent data fed into the engine: files, vectors, corpora.
class InputError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or flag combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A remote backend (embedding endpoint, LLM endpoint) failed.
class BackendError : public Error {
 public:
  using Error::Error;
};

// Broken internal invariant. Seeing one of these is a bug.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace hiermem
