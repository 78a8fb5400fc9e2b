/*
 * Copyright 2026 The soundexpl Authors.
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

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace soundexpl {

// Every library failure derives from Error. The CLI maps IoError to exit
// code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Wrong number of input values for a graph or model.
class InputArityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InvalidCutError : public ValidationError {
 public:
  InvalidCutError(std::string clause, const std::string& detail)
      : ValidationError("invalid cut (" + clause + "): " + detail),
        clause_(std::move(clause)) {}
  const std::string& clause() const { return clause_; }

 private:
  std::string clause_;
};

class IncompleteExplanationError : public ValidationError {
 public:
  IncompleteExplanationError(std::size_t vertex, const std::string& what)
      : ValidationError(what), vertex_(vertex) {}
  std::size_t vertex() const { return vertex_; }

 private:
  std::size_t vertex_;
};

class PreconditionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Raised by training / AUC code when only one label class is present.
class SingleClassError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Internal invariant broken (a golden check failed).
class ImplementationDefect : public Error {
 public:
  using Error::Error;
};

}  // namespace soundexpl
