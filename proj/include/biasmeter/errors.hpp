// Copyright 2026 The BiasMeter Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace biasmeter {

// Error families. The CLI maps InputError and its subclasses to exit code 2,
// ConfigError and its subclasses to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content (bad record, duplicate rank, weights off by > 1e-6).
class FormatError : public InputError {
 public:
  using InputError::InputError;
};

/// Attribute or value not declared by the schema, or vectors over different value sets.
class SchemaError : public InputError {
 public:
  using InputError::InputError;
};

/// A user profile lacks an attribute the measure needs.
class ProfileError : public InputError {
 public:
  using InputError::InputError;
};

/// The measure has no defined value for this input (e.g. all mass unannotated).
class UndefinedMeasureError : public InputError {
 public:
  using InputError::InputError;
};

/// Too few users to resample.
class SmallSampleError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Measure requested in a mode that cannot support it (content bias without ground truth).
class ModeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Exact enumeration refused because the instance is too large.
class ComplexityError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace biasmeter
