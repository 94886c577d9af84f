/*
 * Copyright 2026 The HarmoF0 Toolkit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
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

namespace harmof0 {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, inconsistent shapes, out-of-range values.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Unreadable, unwritable or malformed files.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Raised by the training loop when the loss stops being finite.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch, int batch, std::string layer)
      : Error(what), epoch_(epoch), batch_(batch), layer_(std::move(layer)) {}

  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }
  const std::string& layer() const noexcept { return layer_; }

 private:
  int epoch_;
  int batch_;
  std::string layer_;
};

}  // namespace harmof0
