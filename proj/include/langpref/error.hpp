/*
 * Copyright 2026 The langpref Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace langpref {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input record. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

// A record parsed fine but breaks a data-model invariant (K > 9, gaps in ids).
class ConstraintError : public Error {
 public:
  using Error::Error;
};

// Adapter or backend call failed in a way that may succeed on retry.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int doc_id = 0)
      : Error(what), doc_id_(doc_id) {}
  int doc_id() const { return doc_id_; }

 private:
  int doc_id_;
};

// Adapter answered but the answer is unusable (empty translation, ...).
class InvalidOutputError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

// A prerequisite artifact is missing (translation, prior pipeline stage).
class DependencyError : public Error {
 public:
  using Error::Error;
};

// Backend does not implement an optional operation.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Mathematical precondition violated (empty input, mismatched sizes, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Calls `fn` up to `attempts` times, retrying only on TransportError.
template <typename Fn>
auto with_retries(Fn&& fn, int attempts) -> decltype(fn()) {
  for (int i = 1;; ++i) {
    try {
      return fn();
    } catch (const TransportError&) {
      if (i >= attempts) throw;
    }
  }
}

}  // namespace langpref
