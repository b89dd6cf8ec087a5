// Copyright 2026 The dlip Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dlip {

// Exception families map onto CLI exit codes: UsageError -> 1,
// DataError -> 2, NumericError -> 3.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedRecord : public DataError {
 public:
  MalformedRecord(std::size_t line, std::string field, const std::string& what)
      : DataError("malformed record at line " + std::to_string(line) +
                  ", field '" + field + "': " + what),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class UnknownSource : public DataError {
 public:
  using DataError::DataError;
};

class EmptySet : public DataError {
 public:
  using DataError::DataError;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionMismatch : public DataError {
 public:
  using DataError::DataError;
};

class ShapeMismatch : public DataError {
 public:
  using DataError::DataError;
};

class VersionMismatch : public DataError {
 public:
  using DataError::DataError;
};

class CorruptCheckpoint : public DataError {
 public:
  using DataError::DataError;
};

class EmptyGallery : public DataError {
 public:
  using DataError::DataError;
};

class NoClasses : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateVector : public NumericError {
 public:
  using NumericError::NumericError;
};

class NonFiniteInput : public NumericError {
 public:
  using NumericError::NumericError;
};

class NonFiniteLoss : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace dlip
