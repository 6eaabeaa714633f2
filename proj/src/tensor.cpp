#include "intercnn/tensor.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

namespace icnn {

const char* error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidShape: return "invalid-shape";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::InvalidLabel: return "invalid-label";
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::CorruptedState: return "corrupted-state";
    case ErrorKind::EmptyTape: return "empty-tape";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::Format: return "format";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
    case ErrorKind::Training: return "training";
    case ErrorKind::Lookup: return "lookup";
    case ErrorKind::InsufficientFrames: return "insufficient-frames";
    case ErrorKind::Crop: return "crop";
  }
  return "unknown";
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > kMaxRank)
    fail(ErrorKind::InvalidShape, "tensor rank must be 1.." + std::to_string(kMaxRank) + ", got " + shape_str(shape));
  for (auto d : shape)
    if (d == 0) fail(ErrorKind::InvalidShape, "zero dimension in shape " + shape_str(shape));
}

}  // namespace

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype) {
  validate_shape(shape_);
  if (dtype_ == DType::f32)
    data_ = AlignedVector<float>(numel(), 0.0f);
  else
    data_ = AlignedVector<double>(numel(), 0.0);
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t(std::move(shape), dtype);
  t.fill(value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<float> values) {
  validate_shape(shape);
  if (values.size() != shape_numel(shape))
    fail(ErrorKind::InvalidShape, "value count " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.dtype_ = DType::f32;
  t.data_ = AlignedVector<float>(values.begin(), values.end());
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  validate_shape(shape);
  if (values.size() != shape_numel(shape))
    fail(ErrorKind::InvalidShape, "value count " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.dtype_ = DType::f64;
  t.data_ = AlignedVector<double>(values.begin(), values.end());
  return t;
}

std::size_t Tensor::dim(int i) const {
  const int r = static_cast<int>(rank());
  const int j = i < 0 ? r + i : i;
  if (j < 0 || j >= r) fail(ErrorKind::Shape, "dimension index " + std::to_string(i) + " out of range for " + shape_str(shape_));
  return shape_[static_cast<std::size_t>(j)];
}

double Tensor::at(std::size_t flat) const {
  return dispatch(dtype_, [&](auto tag) -> double {
    using T = decltype(tag);
    return static_cast<double>(data<T>()[flat]);
  });
}

void Tensor::set(std::size_t flat, double value) {
  dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    data<T>()[flat] = static_cast<T>(value);
  });
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  validate_shape(shape);
  if (shape_numel(shape) != numel())
    fail(ErrorKind::Shape, "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  shape_ = std::move(shape);
  return std::move(*this);
}

Tensor Tensor::cast(DType dtype) const {
  if (dtype == dtype_) return *this;
  Tensor out(shape_, dtype);
  dispatch(dtype_, [&](auto src_tag) {
    using S = decltype(src_tag);
    dispatch(dtype, [&](auto dst_tag) {
      using D = decltype(dst_tag);
      auto src = data<S>();
      auto dst = out.data<D>();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<D>(src[i]);
    });
  });
  return out;
}

void Tensor::fill(double value) {
  dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    for (auto& v : data<T>()) v = static_cast<T>(value);
  });
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (shape_ != other.shape_ || dtype_ != other.dtype_) return false;
  if (empty()) return true;
  return dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    auto a = data<T>();
    auto b = other.data<T>();
    return std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
  });
}

bool Tensor::all_finite() const {
  if (empty()) return true;
  return dispatch(dtype_, [&](auto tag) {
    using T = decltype(tag);
    for (T v : data<T>())
      if (!std::isfinite(v)) return false;
    return true;
  });
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Tensor init_tensor(const Shape& shape, InitScheme scheme, std::size_t fan_in, std::uint64_t seed, DType dtype) {
  Tensor t(shape, dtype);
  if (scheme == InitScheme::Zeros) return t;
  if (fan_in == 0) fail(ErrorKind::InvalidShape, "fan_in must be >= 1 for random initialization");
  const double variance = (scheme == InitScheme::HeNormal ? 2.0 : 1.0) / static_cast<double>(fan_in);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(variance));
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    for (auto& v : t.data<T>()) v = static_cast<T>(normal(rng));
  });
  return t;
}

}  // namespace icnn
