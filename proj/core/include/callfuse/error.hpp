// Copyright 2026 The callfuse authors
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

#ifndef CALLFUSE_ERROR_HPP
#define CALLFUSE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace callfuse {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension or rank mismatch between tensors.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument, violated precondition, or malformed record.
class ValueError : public Error {
 public:
  using Error::Error;
};

/// File missing, unreadable, or with a bad header.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value or failed numeric check.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace callfuse

#endif  // CALLFUSE_ERROR_HPP
