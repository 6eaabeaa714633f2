#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "intercnn/error.hpp"

namespace icnn {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

using Shape = std::vector<std::size_t>;

inline constexpr std::size_t kMaxRank = 5;

/// 64-byte aligned storage. Vectorized GEMM picks its code path from pointer
/// alignment, so a fixed alignment keeps results bitwise reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <class T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of f32 or f64 values. Rank is 1..5 and every
/// dimension is at least 1; a default-constructed tensor is the "absent"
/// tensor and holds no data.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, DType dtype = DType::f32);

  static Tensor zeros(Shape shape, DType dtype = DType::f32) { return Tensor(std::move(shape), dtype); }
  static Tensor full(Shape shape, double value, DType dtype = DType::f32);
  static Tensor from(Shape shape, std::vector<float> values);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), t.dtype()); }

  bool empty() const noexcept { return shape_.empty(); }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  /// Dimension i; negative i counts from the back.
  std::size_t dim(int i) const;
  std::size_t numel() const noexcept { return shape_numel(shape_); }
  DType dtype() const noexcept { return dtype_; }

  template <class T>
  std::span<T> data();
  template <class T>
  std::span<const T> data() const;

  double at(std::size_t flat) const;
  void set(std::size_t flat, double value);

  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;
  Tensor cast(DType dtype) const;
  void fill(double value);

  bool bitwise_equal(const Tensor& other) const;
  bool all_finite() const;

 private:
  Shape shape_;
  DType dtype_ = DType::f32;
  std::variant<AlignedVector<float>, AlignedVector<double>> data_;
};

template <class T>
inline constexpr DType dtype_of = std::is_same_v<T, float> ? DType::f32 : DType::f64;

template <class T>
std::span<T> Tensor::data() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  if (dtype_ != dtype_of<T>) fail(ErrorKind::Contract, "tensor dtype mismatch on data access");
  return std::get<AlignedVector<T>>(data_);
}

template <class T>
std::span<const T> Tensor::data() const {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  if (dtype_ != dtype_of<T>) fail(ErrorKind::Contract, "tensor dtype mismatch on data access");
  return std::get<AlignedVector<T>>(data_);
}

/// Calls f with a value-initialized float or double matching dtype.
template <class F>
decltype(auto) dispatch(DType dtype, F&& f) {
  if (dtype == DType::f32) return f(float{});
  return f(double{});
}

enum class InitScheme { Zeros, LecunNormal, HeNormal };

/// Zero or normal(0, 1/fan_in or 2/fan_in) initialization. Identical
/// (shape, scheme, fan_in, seed) produce bit-identical buffers.
Tensor init_tensor(const Shape& shape, InitScheme scheme, std::size_t fan_in, std::uint64_t seed,
                   DType dtype = DType::f32);

/// splitmix64 step; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace icnn
