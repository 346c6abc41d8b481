#pragma once

#include <cstddef>
#include <filesystem>
#include <new>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scasnet/errors.hpp"

namespace scasnet {

using Real = double;
using Shape = std::vector<std::size_t>;

// Cache-line aligned storage, so vectorized reductions see the same alignment on every
// run and results are reproducible bit for bit.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, alignment); }

  // Default-initialize on resize(n), so buffers that are about to be overwritten skip the zero fill.
  template <typename U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using RealBuffer = std::vector<Real, AlignedAllocator<Real>>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major array. Rank-4 tensors use batch x channel x height x width.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0);
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_, 0); }
  /// Contents unspecified; for outputs that are fully overwritten.
  static Tensor uninitialized(Shape shape);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // NCHW accessors; only meaningful for rank-4 tensors.
  std::size_t n() const { return shape_[0]; }
  std::size_t c() const { return shape_[1]; }
  std::size_t h() const { return shape_[2]; }
  std::size_t w() const { return shape_[3]; }
  std::size_t plane() const { return shape_[2] * shape_[3]; }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  Real at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  void fill(Real v);
  Tensor reshaped(Shape shape) const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(Real s);

  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  RealBuffer data_;
};

/// Shape-checked constructor; every dimension must be positive.
Tensor tensor_new(const Shape& shape, Real fill);

Tensor elementwise_sum(const Tensor& a, const Tensor& b);

/// Throws ShapeError naming both shapes when they differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Single-slice copy of a rank-4 tensor along the batch axis.
Tensor batch_slice(const Tensor& t, std::size_t index);
/// Concatenates rank-4 tensors of identical C,H,W along the batch axis.
Tensor batch_concat(std::span<const Tensor> parts);

/// Max absolute difference; shapes must match.
Real max_abs_diff(const Tensor& a, const Tensor& b);

/// A trainable value with its accumulated gradient.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool decay = true;      // weight decay applies
  bool trainable = true;  // false for running statistics, which are saved but never stepped

  Param() = default;
  Param(std::string n, Tensor v, bool with_decay, bool is_trainable = true)
      : name(std::move(n)),
        value(std::move(v)),
        grad(Tensor::zeros_like(value)),
        decay(with_decay),
        trainable(is_trainable) {}

  void zero_grad() { grad.fill(0); }
  void accumulate(const Tensor& g);
};

// Binary tensor file: "SCASTNSR", u32 rank, rank x u32 dims, little-endian f64 payload.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace scasnet
