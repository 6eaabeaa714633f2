#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "intercnn/ops.hpp"

namespace icnn {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Receives the output gradient and the mask of inputs that need a gradient;
/// returns one tensor per input (an empty Tensor where not needed).
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out, const std::vector<bool>& needs)>;

/// Reverse-mode autodiff record. Nodes are appended in evaluation order, so
/// every node's inputs precede it. Confined to one thread.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = false);
  Var record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node reachable from
  /// the loss. The loss must be a single-element node of this tape.
  void backward(Var loss);

  /// Gradient of the last backward w.r.t. v; nullptr when v received none.
  const Tensor* grad(Var v) const;
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  const std::string& op(Var v) const { return nodes_.at(v.id).op; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }
  std::span<const std::size_t> inputs(Var v) const { return nodes_.at(v.id).inputs; }

 private:
  struct Node {
    std::string op;
    std::vector<std::size_t> inputs;
    Tensor value;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<std::optional<Tensor>> grads_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

/// Differentiable counterparts of the ops:: kernels.
namespace ad {

Var conv2d(Var x, Var kernel, Var bias, std::array<std::size_t, 2> stride, Padding padding);
Var conv3d(Var x, Var kernel, Var bias, std::array<std::size_t, 3> stride, Padding padding);
Var depthwise_conv2d(Var x, Var kernel, Var bias, std::array<std::size_t, 2> stride, Padding padding);
/// running_mean/running_var are updated in place only when mode is Train and
/// update_running is set.
Var batch_norm(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var, double momentum,
               double epsilon, Mode mode, bool update_running);
Var activation(Var x, Activation kind, const SeluParams& selu = kSelu);
Var concat_channels(Var a, Var b);
Var dense(Var x, Var weights, Var bias);
Var softmax_cross_entropy(Var logits, std::vector<int> labels);
Var global_avg_pool(Var x);
Var fold_time(Var x);
Var temporal_fuse(Var spatial, Var temporal);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var sum(Var a);

}  // namespace ad
}  // namespace icnn
