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

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "harmof0/error.hpp"

namespace harmof0 {

/// Extent of a (batch, channel, frequency, time) array.
struct Shape4 {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t freq = 0;
  std::size_t time = 0;

  std::size_t plane() const noexcept { return freq * time; }
  std::size_t size() const noexcept { return batch * channels * freq * time; }

  friend bool operator==(const Shape4&, const Shape4&) = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << batch << ", " << channels << ", " << freq << ", " << time << ")";
    return os.str();
  }
};

/// Dense 4-axis array stored (B, C, F, T) with time innermost.
///
/// Each (b, c) pair owns one contiguous F x T plane, so a shift along
/// the frequency axis is a contiguous pointer offset of `time` elements.
/// The gradient buffer is allocated on demand and always matches the data.
template <class T>
class Tensor4 {
 public:
  using value_type = T;

  Tensor4() = default;
  explicit Tensor4(Shape4 shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
  Tensor4(std::size_t b, std::size_t c, std::size_t f, std::size_t t, T fill = T(0))
      : Tensor4(Shape4{b, c, f, t}, fill) {}

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t batch() const noexcept { return shape_.batch; }
  std::size_t channels() const noexcept { return shape_.channels; }
  std::size_t freq() const noexcept { return shape_.freq; }
  std::size_t time() const noexcept { return shape_.time; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  T& operator()(std::size_t b, std::size_t c, std::size_t f, std::size_t t) noexcept {
    return data_[index(b, c, f, t)];
  }
  const T& operator()(std::size_t b, std::size_t c, std::size_t f, std::size_t t) const noexcept {
    return data_[index(b, c, f, t)];
  }

  /// The contiguous F x T plane of item `b`, channel `c`.
  T* plane(std::size_t b, std::size_t c) noexcept { return data_.data() + (b * shape_.channels + c) * shape_.plane(); }
  const T* plane(std::size_t b, std::size_t c) const noexcept {
    return data_.data() + (b * shape_.channels + c) * shape_.plane();
  }
  /// All channels of item `b` (channel stride = plane size).
  T* item(std::size_t b) noexcept { return plane(b, 0); }
  const T* item(std::size_t b) const noexcept { return plane(b, 0); }

  bool has_grad() const noexcept { return !grad_.empty(); }
  std::span<T> grad() {
    if (grad_.empty()) grad_.assign(data_.size(), T(0));
    return grad_;
  }
  std::span<const T> grad() const noexcept { return grad_; }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), T(0)); }
  void drop_grad() { grad_.clear(); grad_.shrink_to_fit(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  /// Element-wise precision conversion (used for the double-precision shadow path).
  template <class U>
  Tensor4<U> cast() const {
    Tensor4<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data().begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }

 private:
  std::size_t index(std::size_t b, std::size_t c, std::size_t f, std::size_t t) const noexcept {
    assert(b < shape_.batch && c < shape_.channels && f < shape_.freq && t < shape_.time);
    return ((b * shape_.channels + c) * shape_.freq + f) * shape_.time + t;
  }

  Shape4 shape_{};
  std::vector<T> data_;
  std::vector<T> grad_;
};

inline void require_shape(const Shape4& got, const Shape4& want, const char* what) {
  if (got != want) {
    throw ValidationError(std::string(what) + ": shape mismatch, got " + got.str() + ", expected " + want.str());
  }
}

}  // namespace harmof0
