#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "mtf/core/error.hpp"

namespace mtf {

/// Allocator with a fixed 64-byte alignment. Eigen's vectorized reductions
/// peel leading elements up to the first aligned address, so the summation
/// order, and the last bits of the result, would otherwise depend on where
/// the allocator happened to place a buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <class U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) {
    return true;
  }
};

template <class T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Up-to-rank-4 extent list. Feature maps are channels-first (C,H,W); a
/// batch adds a leading extent (N,C,H,W).
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) {
    if (dims.size() == 0 || dims.size() > kMaxRank) {
      throw ShapeError("shape rank must be in [1,4], got " + std::to_string(dims.size()));
    }
    for (std::size_t d : dims) dims_[rank_++] = d;
    check();
  }
  template <class It>
  Shape(It first, It last) {
    for (; first != last; ++first) {
      if (rank_ == kMaxRank) throw ShapeError("shape rank exceeds 4");
      dims_[rank_++] = static_cast<std::size_t>(*first);
    }
    if (rank_ == 0) throw ShapeError("shape rank must be >= 1");
    check();
  }

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  std::size_t size() const {
    std::size_t n = 1;
    for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }
  std::span<const std::size_t> dims() const { return {dims_.data(), rank_}; }

  friend bool operator==(const Shape& a, const Shape& b) {
    return a.rank_ == b.rank_ && std::equal(a.dims_.begin(), a.dims_.begin() + a.rank_, b.dims_.begin());
  }

  std::string str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < rank_; ++i) {
      if (i) s += "x";
      s += std::to_string(dims_[i]);
    }
    return s + "]";
  }

 private:
  void check() const {
    for (std::size_t i = 0; i < rank_; ++i) {
      if (dims_[i] < 1) throw ShapeError("shape extents must be >= 1: " + str());
    }
  }

  std::array<std::size_t, kMaxRank> dims_{};
  std::size_t rank_ = 0;
};

/// Dense row-major tensor owning its storage.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(shape.size(), T(0)) {}
  Tensor(Shape shape, std::initializer_list<T> data) : Tensor(shape, AlignedVector<T>(data)) {}
  Tensor(Shape shape, const std::vector<T>& data) : Tensor(shape, AlignedVector<T>(data.begin(), data.end())) {}
  Tensor(Shape shape, AlignedVector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same storage, new extents; the element count must not change.
  Tensor reshaped(Shape shape) const& {
    if (shape.size() != size()) throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
    return Tensor(shape, data_);
  }
  Tensor reshaped(Shape shape) && {
    if (shape.size() != size()) throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
    return Tensor(shape, std::move(data_));
  }

  template <class U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, AlignedVector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

}  // namespace mtf
