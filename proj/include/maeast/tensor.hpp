#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maeast/common.hpp"

namespace maeast::nn {

/// Process-wide accounting of live tensor storage. Every Tensor buffer
/// reports here on allocation and release; the high-water mark is what the
/// benchmark reports as peak memory.
class MemoryTracker {
 public:
  static void on_alloc(std::size_t bytes);
  static void on_free(std::size_t bytes);
  static std::size_t live_bytes();
  static std::size_t peak_bytes();
  /// Resets the high-water mark to the current live byte count.
  static void reset_peak();
};

/// Dense row-major tensor with shared storage. Copies alias the same buffer
/// (handle semantics); use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  /// Zero-filled tensor of the given shape.
  explicit Tensor(std::vector<Index> shape) : Tensor(std::move(shape), true) {}

  static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape), true); }
  /// Storage is left uninitialized; caller must overwrite every element.
  static Tensor empty(std::vector<Index> shape) { return Tensor(std::move(shape), false); }
  static Tensor full(std::vector<Index> shape, T value) {
    Tensor t(std::move(shape), false);
    std::fill_n(t.data(), t.size(), value);
    return t;
  }
  static Tensor from(std::vector<Index> shape, std::span<const T> values);

  bool defined() const { return buf_ != nullptr; }
  const std::vector<Index>& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return size_; }
  Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Index rows() const { return shape_.at(0); }
  Index cols() const { return shape_.at(1); }

  T* data() { return buf_ ? buf_->data.get() : nullptr; }
  const T* data() const { return buf_ ? buf_->data.get() : nullptr; }
  std::span<T> values() { return {data(), static_cast<std::size_t>(size_)}; }
  std::span<const T> values() const { return {data(), static_cast<std::size_t>(size_)}; }

  T& operator()(Index r, Index c) { return data()[r * shape_[1] + c]; }
  const T& operator()(Index r, Index c) const { return data()[r * shape_[1] + c]; }
  T& operator[](Index i) { return data()[i]; }
  const T& operator[](Index i) const { return data()[i]; }

  T* row(Index r) { return data() + r * shape_[1]; }
  const T* row(Index r) const { return data() + r * shape_[1]; }

  Tensor clone() const;
  /// True when no other handle shares this storage.
  bool unique() const { return buf_.use_count() == 1; }

  template <typename U>
  Tensor<U> cast() const {
    auto out = Tensor<U>::empty(shape_);
    for (Index i = 0; i < size_; ++i) out[i] = static_cast<U>(data()[i]);
    return out;
  }

 private:
  struct Buffer {
    explicit Buffer(std::size_t n, bool zero);
    ~Buffer();
    Buffer(const Buffer&) = delete;
    Buffer& operator=(const Buffer&) = delete;
    std::unique_ptr<T[]> data;
    std::size_t count;
  };

  Tensor(std::vector<Index> shape, bool zero);

  std::vector<Index> shape_;
  Index size_ = 0;
  std::shared_ptr<Buffer> buf_;
};

/// Row ranges of a stacked multi-clip matrix: clip b owns rows
/// [offset(b), offset(b + 1)).
struct Segments {
  std::vector<Index> offsets{0};

  static Segments uniform(Index count, Index length);
  static Segments from_lengths(std::span<const Index> lengths);

  Index count() const { return static_cast<Index>(offsets.size()) - 1; }
  Index begin(Index b) const { return offsets[static_cast<std::size_t>(b)]; }
  Index end(Index b) const { return offsets[static_cast<std::size_t>(b) + 1]; }
  Index length(Index b) const { return end(b) - begin(b); }
  Index total() const { return offsets.back(); }
};

/// Throws NumericFault naming `where` if any element is NaN or infinite.
template <typename T>
void ensure_finite(const Tensor<T>& t, std::string_view where);

template <typename T>
bool all_finite(std::span<const T> values);

/// dst += src, elementwise; shapes must hold the same element count.
template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src);

}  // namespace maeast::nn
