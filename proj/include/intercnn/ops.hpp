#pragma once

#include <array>
#include <span>
#include <utility>

#include "intercnn/tensor.hpp"

namespace icnn {

enum class Padding { Same, Valid };
enum class Mode { Train, Eval };
enum class Activation { None, Selu, Relu };

struct SeluParams {
  double lambda = 1.0507;
  double alpha = 1.6733;
};

inline constexpr SeluParams kSelu{};

struct BatchNormState {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.99;
  double epsilon = 1e-5;
  Mode mode = Mode::Train;

  /// gamma=1, beta=0, running mean 0 and variance 1.
  static BatchNormState identity(std::size_t channels, DType dtype = DType::f32);
};

namespace ops {

std::size_t conv_out_dim(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding);
/// Leading-side padding for 'same'; any odd remainder goes to the trailing side.
std::size_t same_pad_before(std::size_t in, std::size_t kernel, std::size_t stride);

struct ConvGrads {
  Tensor input;
  Tensor kernel;
  Tensor bias;
};

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::array<std::size_t, 2> stride, Padding padding);
ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                          std::array<std::size_t, 2> stride, Padding padding, bool need_input = true,
                          bool need_params = true);

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::array<std::size_t, 3> stride, Padding padding);
ConvGrads conv3d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                          std::array<std::size_t, 3> stride, Padding padding, bool need_input = true,
                          bool need_params = true);

Tensor depthwise_conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        std::array<std::size_t, 2> stride, Padding padding);
ConvGrads depthwise_conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                                    std::array<std::size_t, 2> stride, Padding padding,
                                    bool need_input = true, bool need_params = true);

/// Values kept from a batch-norm forward for the backward pass.
struct BatchNormCache {
  Tensor normalized;            // x-hat, same shape as input
  std::vector<double> inv_std;  // per channel
  Mode mode = Mode::Eval;
};

struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

/// Channels-last batch norm. In train mode normalizes with batch statistics
/// and, when update_running is set, folds them into the running estimates.
Tensor batch_norm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                          Tensor& running_mean, Tensor& running_var, double momentum, double epsilon,
                          Mode mode, bool update_running, BatchNormCache* cache);
BatchNormGrads batch_norm_backward(const Tensor& grad_out, const Tensor& gamma, const BatchNormCache& cache);

Tensor batch_norm(const Tensor& input, BatchNormState& state);

Tensor activation(const Tensor& x, Activation kind, const SeluParams& selu = kSelu);
Tensor activation_backward(const Tensor& x, const Tensor& grad_out, Activation kind,
                           const SeluParams& selu = kSelu);

Tensor concat_channels(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> split_channels(const Tensor& x, std::size_t first_channels);

Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias);
struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& grad_out);

struct CrossEntropy {
  double loss = 0.0;
  Tensor probs;  // softmax of the logits
};
CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
Tensor softmax_cross_entropy_backward(const Tensor& probs, std::span<const int> labels, double grad_loss);

/// [N,H,W,C] -> [N,C]
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_out);

/// [N,T,H,W,C] -> [N,H,W,T*C]; output channel j holds (t = j / C, c = j % C).
Tensor fold_time(const Tensor& x);
Tensor unfold_time(const Tensor& folded, std::size_t time);

/// Folds both streams' time axes into channels and concatenates them.
Tensor temporal_fuse(const Tensor& spatial, const Tensor& temporal);

/// concat(a, b) followed by a 1x1 convolution with kernel [1,1,2C,2C].
Tensor spatial_fuse(const Tensor& a, const Tensor& b, const Tensor& kernel, const Tensor& bias, std::size_t stride);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
double sum(const Tensor& a);

}  // namespace ops
}  // namespace icnn
