/* Copyright 2026 The tempseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace tempseg {

// Caller broke a precondition (mismatched shapes, wrong lengths).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Input data or configuration is invalid.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem problem; the message always names the offending path.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint written by an incompatible format version.
class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename... Args>
std::string concat(const Args&... args) {
  std::ostringstream oss;
  (oss << ... << args);
  return oss.str();
}

}  // namespace detail

#define TEMPSEG_REQUIRE(cond, ...)                                     \
  do {                                                                 \
    if (!(cond))                                                       \
      throw ::tempseg::ContractViolation(                              \
          ::tempseg::detail::concat(__func__, ": ", __VA_ARGS__));     \
  } while (0)

#define TEMPSEG_VALIDATE(cond, ...)                                    \
  do {                                                                 \
    if (!(cond))                                                       \
      throw ::tempseg::ValidationError(                                \
          ::tempseg::detail::concat(__func__, ": ", __VA_ARGS__));     \
  } while (0)

}  // namespace tempseg
