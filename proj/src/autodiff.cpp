#include "intercnn/autodiff.hpp"

#include <memory>

namespace icnn {

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (value.empty()) fail(ErrorKind::InvalidShape, "tape leaf must hold a tensor");
  nodes_.push_back(Node{"leaf", {}, std::move(value), nullptr, requires_grad});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  for (const Var& v : inputs) {
    if (v.tape != this) fail(ErrorKind::Contract, "op '" + node.op + "' mixes variables from different tapes");
    node.inputs.push_back(v.id);
    node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) fail(ErrorKind::EmptyTape, "backward called on an empty tape");
  if (loss.tape != this || loss.id >= nodes_.size()) fail(ErrorKind::Contract, "loss is not a node of this tape");
  const Tensor& lv = nodes_[loss.id].value;
  if (lv.numel() != 1) fail(ErrorKind::Contract, "backward needs a scalar loss, got shape " + shape_str(lv.shape()));

  grads_.assign(nodes_.size(), std::nullopt);
  grads_[loss.id] = Tensor::full(lv.shape(), 1.0, lv.dtype());
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!grads_[i] || !node.requires_grad || !node.backward) continue;
    std::vector<bool> needs(node.inputs.size());
    bool any = false;
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      needs[k] = nodes_[node.inputs[k]].requires_grad;
      any = any || needs[k];
    }
    if (!any) continue;
    std::vector<Tensor> in_grads = node.backward(*grads_[i], needs);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (!needs[k] || in_grads[k].empty()) continue;
      auto& slot = grads_[node.inputs[k]];
      if (slot)
        *slot = ops::add(*slot, in_grads[k]);
      else
        slot = std::move(in_grads[k]);
    }
  }
}

const Tensor* Tape::grad(Var v) const {
  if (v.id >= grads_.size() || !grads_[v.id]) return nullptr;
  return &*grads_[v.id];
}

namespace ad {

namespace {
bool tracking(std::initializer_list<Var> vars) {
  for (const Var& v : vars)
    if (v.tape->requires_grad(v)) return true;
  return false;
}
}  // namespace

Var conv2d(Var x, Var kernel, Var bias, std::array<std::size_t, 2> stride, Padding padding) {
  Tensor y = ops::conv2d(x.value(), kernel.value(), bias.value(), stride, padding);
  return x.tape->record("conv2d", std::move(y), {x, kernel, bias},
                        [x, kernel, stride, padding](const Tensor& g, const std::vector<bool>& needs) {
                          auto r = ops::conv2d_backward(x.value(), kernel.value(), g, stride, padding, needs[0],
                                                        needs[1] || needs[2]);
                          return std::vector<Tensor>{std::move(r.input), std::move(r.kernel), std::move(r.bias)};
                        });
}

Var conv3d(Var x, Var kernel, Var bias, std::array<std::size_t, 3> stride, Padding padding) {
  Tensor y = ops::conv3d(x.value(), kernel.value(), bias.value(), stride, padding);
  return x.tape->record("conv3d", std::move(y), {x, kernel, bias},
                        [x, kernel, stride, padding](const Tensor& g, const std::vector<bool>& needs) {
                          auto r = ops::conv3d_backward(x.value(), kernel.value(), g, stride, padding, needs[0],
                                                        needs[1] || needs[2]);
                          return std::vector<Tensor>{std::move(r.input), std::move(r.kernel), std::move(r.bias)};
                        });
}

Var depthwise_conv2d(Var x, Var kernel, Var bias, std::array<std::size_t, 2> stride, Padding padding) {
  Tensor y = ops::depthwise_conv2d(x.value(), kernel.value(), bias.value(), stride, padding);
  return x.tape->record("depthwise_conv2d", std::move(y), {x, kernel, bias},
                        [x, kernel, stride, padding](const Tensor& g, const std::vector<bool>& needs) {
                          auto r = ops::depthwise_conv2d_backward(x.value(), kernel.value(), g, stride, padding,
                                                                  needs[0], needs[1] || needs[2]);
                          return std::vector<Tensor>{std::move(r.input), std::move(r.kernel), std::move(r.bias)};
                        });
}

Var batch_norm(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var, double momentum,
               double epsilon, Mode mode, bool update_running) {
  const bool track = tracking({x, gamma, beta});
  auto cache = std::make_shared<ops::BatchNormCache>();
  Tensor y = ops::batch_norm_forward(x.value(), gamma.value(), beta.value(), running_mean, running_var, momentum,
                                     epsilon, mode, update_running, track ? cache.get() : nullptr);
  return x.tape->record("batch_norm", std::move(y), {x, gamma, beta},
                        [gamma, cache](const Tensor& g, const std::vector<bool>&) {
                          auto r = ops::batch_norm_backward(g, gamma.value(), *cache);
                          return std::vector<Tensor>{std::move(r.input), std::move(r.gamma), std::move(r.beta)};
                        });
}

Var activation(Var x, Activation kind, const SeluParams& selu) {
  if (kind == Activation::None) return x;
  Tensor y = ops::activation(x.value(), kind, selu);
  return x.tape->record(kind == Activation::Relu ? "relu" : "selu", std::move(y), {x},
                        [x, kind, selu](const Tensor& g, const std::vector<bool>&) {
                          return std::vector<Tensor>{ops::activation_backward(x.value(), g, kind, selu)};
                        });
}

Var concat_channels(Var a, Var b) {
  const std::size_t ca = a.value().dim(-1);
  return a.tape->record("concat_channels", ops::concat_channels(a.value(), b.value()), {a, b},
                        [ca](const Tensor& g, const std::vector<bool>&) {
                          auto [ga, gb] = ops::split_channels(g, ca);
                          return std::vector<Tensor>{std::move(ga), std::move(gb)};
                        });
}

Var dense(Var x, Var weights, Var bias) {
  return x.tape->record("dense", ops::dense(x.value(), weights.value(), bias.value()), {x, weights, bias},
                        [x, weights](const Tensor& g, const std::vector<bool>&) {
                          auto r = ops::dense_backward(x.value(), weights.value(), g);
                          return std::vector<Tensor>{std::move(r.input), std::move(r.weights), std::move(r.bias)};
                        });
}

Var softmax_cross_entropy(Var logits, std::vector<int> labels) {
  auto ce = ops::softmax_cross_entropy(logits.value(), labels);
  Tensor loss = Tensor::full({1}, ce.loss, logits.value().dtype());
  return logits.tape->record("softmax_cross_entropy", std::move(loss), {logits},
                             [probs = std::move(ce.probs), labels = std::move(labels)](const Tensor& g,
                                                                                      const std::vector<bool>&) {
                               return std::vector<Tensor>{ops::softmax_cross_entropy_backward(probs, labels, g.at(0))};
                             });
}

Var global_avg_pool(Var x) {
  return x.tape->record("global_avg_pool", ops::global_avg_pool(x.value()), {x},
                        [shape = x.shape()](const Tensor& g, const std::vector<bool>&) {
                          return std::vector<Tensor>{ops::global_avg_pool_backward(shape, g)};
                        });
}

Var fold_time(Var x) {
  const std::size_t t = x.value().dim(1);
  return x.tape->record("fold_time", ops::fold_time(x.value()), {x},
                        [t](const Tensor& g, const std::vector<bool>&) {
                          return std::vector<Tensor>{ops::unfold_time(g, t)};
                        });
}

Var temporal_fuse(Var spatial, Var temporal) {
  const Shape& a = spatial.shape();
  const Shape& b = temporal.shape();
  if (a.size() != 5 || b.size() != 5 || a[0] != b[0] || a[2] != b[2] || a[3] != b[3] || a[4] != b[4])
    fail(ErrorKind::Shape, "temporal_fuse: streams disagree outside the time axis, " + shape_str(a) + " vs " +
                               shape_str(b));
  return concat_channels(fold_time(spatial), fold_time(temporal));
}

Var add(Var a, Var b) {
  return a.tape->record("add", ops::add(a.value(), b.value()), {a, b},
                        [](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{g, g}; });
}

Var mul(Var a, Var b) {
  return a.tape->record("mul", ops::mul(a.value(), b.value()), {a, b},
                        [a, b](const Tensor& g, const std::vector<bool>& needs) {
                          return std::vector<Tensor>{needs[0] ? ops::mul(g, b.value()) : Tensor{},
                                                     needs[1] ? ops::mul(g, a.value()) : Tensor{}};
                        });
}

Var scale(Var a, double s) {
  return a.tape->record("scale", ops::scale(a.value(), s), {a},
                        [s](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{ops::scale(g, s)}; });
}

Var sum(Var a) {
  Tensor total = Tensor::full({1}, ops::sum(a.value()), a.value().dtype());
  return a.tape->record("sum", std::move(total), {a},
                        [shape = a.shape()](const Tensor& g, const std::vector<bool>&) {
                          return std::vector<Tensor>{Tensor::full(shape, g.at(0), g.dtype())};
                        });
}

}  // namespace ad
}  // namespace icnn
