#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "intercnn/autodiff.hpp"

namespace icnn {

/// Ordered, named collection of a network's tensors. Trainable entries are
/// kernels, biases and BN gamma/beta; BN running statistics are stored as
/// non-trainable buffers.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor value, bool trainable = true);

  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_.at(i).name; }
  const Tensor& value(std::size_t i) const { return entries_.at(i).value; }
  Tensor& value(std::size_t i) { return entries_.at(i).value; }
  bool trainable(std::size_t i) const { return entries_.at(i).trainable; }
  std::optional<std::size_t> find(const std::string& name) const;

  /// Number of trainable scalars.
  std::uint64_t trainable_count() const;
  ParamStore cast(DType dtype) const;
  bool bitwise_equal(const ParamStore& other) const;

 private:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

using ActivationSink = std::function<void(const std::string& tag, const Tensor& value)>;

/// State threaded through a network forward pass.
struct ForwardContext {
  Tape& tape;
  std::span<const Var> params;  // one Var per ParamStore entry
  Mode mode = Mode::Eval;
  ParamStore* running = nullptr;  // receives BN running-stat updates in train mode
  const ActivationSink* sink = nullptr;

  Var param(std::size_t i) const { return params[i]; }
  void emit(const std::string& tag, Var v) const {
    if (sink) (*sink)(tag, v.value());
  }
};

/// One leaf per store entry; trainable entries track gradients when requested.
std::vector<Var> bind_params(Tape& tape, const ParamStore& store, bool requires_grad);

}  // namespace icnn
