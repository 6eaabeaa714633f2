#include <Eigen/Core>
#include <cmath>

#include "intercnn/ops.hpp"

namespace icnn {

BatchNormState BatchNormState::identity(std::size_t channels, DType dtype) {
  BatchNormState s;
  s.gamma = Tensor::full({channels}, 1.0, dtype);
  s.beta = Tensor::zeros({channels}, dtype);
  s.running_mean = Tensor::zeros({channels}, dtype);
  s.running_var = Tensor::full({channels}, 1.0, dtype);
  return s;
}

namespace ops {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape() || a.dtype() != b.dtype())
    fail(ErrorKind::Shape, std::string(what) + ": operand shapes differ, " + shape_str(a.shape()) + " vs " +
                               shape_str(b.shape()));
}

void check_channel_vector(const Tensor& v, std::size_t channels, const char* what) {
  if (v.rank() != 1 || v.dim(0) != channels)
    fail(ErrorKind::Shape, std::string("batch_norm: ") + what + " must have " + std::to_string(channels) + " entries");
}

}  // namespace

Tensor batch_norm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                          Tensor& running_var, double momentum, double epsilon, Mode mode, bool update_running,
                          BatchNormCache* cache) {
  const std::size_t channels = input.dim(-1);
  const std::size_t count = input.numel() / channels;
  check_channel_vector(gamma, channels, "gamma");
  check_channel_vector(beta, channels, "beta");
  check_channel_vector(running_mean, channels, "running_mean");
  check_channel_vector(running_var, channels, "running_var");
  for (std::size_t c = 0; c < channels; ++c)
    if (!(running_var.at(c) >= 0.0))
      fail(ErrorKind::CorruptedState, "batch_norm: running_var[" + std::to_string(c) + "] is negative or NaN");
  if (mode == Mode::Train && count < 2)
    fail(ErrorKind::Shape, "batch_norm: train mode needs at least 2 values per channel");

  std::vector<double> mean(channels, 0.0), var(channels, 0.0), inv_std(channels);
  Tensor out(input.shape(), input.dtype());
  Tensor normalized;
  if (cache) normalized = Tensor(input.shape(), input.dtype());

  dispatch(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = input.data<T>();
    if (mode == Mode::Train) {
      for (std::size_t i = 0; i < count; ++i)
        for (std::size_t c = 0; c < channels; ++c) mean[c] += x[i * channels + c];
      for (auto& m : mean) m /= static_cast<double>(count);
      for (std::size_t i = 0; i < count; ++i)
        for (std::size_t c = 0; c < channels; ++c) {
          const double d = x[i * channels + c] - mean[c];
          var[c] += d * d;
        }
      for (auto& v : var) v /= static_cast<double>(count);
    } else {
      for (std::size_t c = 0; c < channels; ++c) {
        mean[c] = running_mean.at(c);
        var[c] = running_var.at(c);
      }
    }
    for (std::size_t c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + epsilon);
    auto y = out.data<T>();
    auto g = gamma.data<T>();
    auto b = beta.data<T>();
    std::vector<T> inv(channels), shift(channels);
    for (std::size_t c = 0; c < channels; ++c) {
      inv[c] = static_cast<T>(inv_std[c]);
      shift[c] = static_cast<T>(mean[c]);
    }
    T* xh = cache ? normalized.data<T>().data() : nullptr;
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t k = i * channels + c;
        const T h = (x[k] - shift[c]) * inv[c];
        if (xh) xh[k] = h;
        y[k] = g[c] * h + b[c];
      }
  });

  if (mode == Mode::Train && update_running) {
    const double unbias = static_cast<double>(count) / static_cast<double>(count - 1);
    for (std::size_t c = 0; c < channels; ++c) {
      running_mean.set(c, momentum * running_mean.at(c) + (1.0 - momentum) * mean[c]);
      running_var.set(c, momentum * running_var.at(c) + (1.0 - momentum) * var[c] * unbias);
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return out;
}

BatchNormGrads batch_norm_backward(const Tensor& grad_out, const Tensor& gamma, const BatchNormCache& cache) {
  const std::size_t channels = grad_out.dim(-1);
  const std::size_t count = grad_out.numel() / channels;
  BatchNormGrads grads;
  grads.input = Tensor(grad_out.shape(), grad_out.dtype());
  grads.gamma = Tensor({channels}, grad_out.dtype());
  grads.beta = Tensor({channels}, grad_out.dtype());
  dispatch(grad_out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto dy = grad_out.data<T>();
    auto xh = cache.normalized.data<T>();
    auto g = gamma.data<T>();
    std::vector<double> sum_dy(channels, 0.0), sum_dy_xh(channels, 0.0);
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t k = i * channels + c;
        sum_dy[c] += dy[k];
        sum_dy_xh[c] += static_cast<double>(dy[k]) * xh[k];
      }
    auto dg = grads.gamma.data<T>();
    auto db = grads.beta.data<T>();
    for (std::size_t c = 0; c < channels; ++c) {
      dg[c] = static_cast<T>(sum_dy_xh[c]);
      db[c] = static_cast<T>(sum_dy[c]);
    }
    auto dx = grads.input.data<T>();
    const double m = static_cast<double>(count);
    std::vector<T> a(channels), mdy(channels), mdyxh(channels);
    for (std::size_t c = 0; c < channels; ++c) {
      a[c] = static_cast<T>(g[c] * cache.inv_std[c]);
      mdy[c] = cache.mode == Mode::Train ? static_cast<T>(sum_dy[c] / m) : T(0);
      mdyxh[c] = cache.mode == Mode::Train ? static_cast<T>(sum_dy_xh[c] / m) : T(0);
    }
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t k = i * channels + c;
        dx[k] = a[c] * (dy[k] - mdy[c] - xh[k] * mdyxh[c]);
      }
  });
  return grads;
}

Tensor batch_norm(const Tensor& input, BatchNormState& state) {
  return batch_norm_forward(input, state.gamma, state.beta, state.running_mean, state.running_var, state.momentum,
                            state.epsilon, state.mode, true, nullptr);
}

Tensor activation(const Tensor& x, Activation kind, const SeluParams& selu) {
  if (kind == Activation::None) return x;
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto y = out.data<T>();
    if (kind == Activation::Relu) {
      for (std::size_t i = 0; i < in.size(); ++i) y[i] = in[i] > T(0) ? in[i] : T(0);
    } else {
      const T lambda = static_cast<T>(selu.lambda);
      const T la = static_cast<T>(selu.lambda * selu.alpha);
      for (std::size_t i = 0; i < in.size(); ++i)
        y[i] = in[i] > T(0) ? lambda * in[i] : la * std::expm1(in[i]);
    }
  });
  return out;
}

Tensor activation_backward(const Tensor& x, const Tensor& grad_out, Activation kind, const SeluParams& selu) {
  if (kind == Activation::None) return grad_out;
  Tensor out(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto dy = grad_out.data<T>();
    auto dx = out.data<T>();
    if (kind == Activation::Relu) {
      for (std::size_t i = 0; i < in.size(); ++i) dx[i] = in[i] > T(0) ? dy[i] : T(0);
    } else {
      const T lambda = static_cast<T>(selu.lambda);
      const T la = static_cast<T>(selu.lambda * selu.alpha);
      for (std::size_t i = 0; i < in.size(); ++i) dx[i] = dy[i] * (in[i] > T(0) ? lambda : la * std::exp(in[i]));
    }
  });
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.dtype() != b.dtype())
    fail(ErrorKind::Shape, "concat_channels: rank/dtype mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  for (std::size_t i = 0; i + 1 < a.rank(); ++i)
    if (a.shape()[i] != b.shape()[i])
      fail(ErrorKind::Shape, "concat_channels: non-channel dims differ " + shape_str(a.shape()) + " vs " +
                                 shape_str(b.shape()));
  const std::size_t ca = a.dim(-1), cb = b.dim(-1), rows = a.numel() / ca;
  Shape s = a.shape();
  s.back() = ca + cb;
  Tensor out(s, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto pa = a.data<T>();
    auto pb = b.data<T>();
    auto po = out.data<T>();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pa.data() + r * ca, ca, po.data() + r * (ca + cb));
      std::copy_n(pb.data() + r * cb, cb, po.data() + r * (ca + cb) + ca);
    }
  });
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& x, std::size_t first_channels) {
  const std::size_t c = x.dim(-1);
  if (first_channels == 0 || first_channels >= c)
    fail(ErrorKind::Shape, "split_channels: split point " + std::to_string(first_channels) + " out of range for " +
                               std::to_string(c) + " channels");
  const std::size_t rows = x.numel() / c, cb = c - first_channels;
  Shape sa = x.shape(), sb = x.shape();
  sa.back() = first_channels;
  sb.back() = cb;
  Tensor a(sa, x.dtype()), b(sb, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = x.data<T>();
    auto pa = a.data<T>();
    auto pb = b.data<T>();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(px.data() + r * c, first_channels, pa.data() + r * first_channels);
      std::copy_n(px.data() + r * c + first_channels, cb, pb.data() + r * cb);
    }
  });
  return {std::move(a), std::move(b)};
}

Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  if (x.rank() != 2 || weights.rank() != 2 || x.dim(1) != weights.dim(0))
    fail(ErrorKind::Shape, "dense: cannot multiply " + shape_str(x.shape()) + " by " + shape_str(weights.shape()));
  if (bias.rank() != 1 || bias.dim(0) != weights.dim(1))
    fail(ErrorKind::Shape, "dense: bias " + shape_str(bias.shape()) + " does not match " + shape_str(weights.shape()));
  const auto n = static_cast<Eigen::Index>(x.dim(0)), d = static_cast<Eigen::Index>(x.dim(1)),
             k = static_cast<Eigen::Index>(weights.dim(1));
  Tensor out({x.dim(0), weights.dim(1)}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    Eigen::Map<const RowMat<T>> mx(x.data<T>().data(), n, d);
    Eigen::Map<const RowMat<T>> mw(weights.data<T>().data(), d, k);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> mb(bias.data<T>().data(), k);
    Eigen::Map<RowMat<T>> my(out.data<T>().data(), n, k);
    // Accumulate in double like the convolutions.
    RowMat<double> acc = mx.template cast<double>() * mw.template cast<double>();
    acc.rowwise() += mb.template cast<double>();
    my = acc.template cast<T>();
  });
  return out;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& grad_out) {
  const auto n = static_cast<Eigen::Index>(x.dim(0)), d = static_cast<Eigen::Index>(x.dim(1)),
             k = static_cast<Eigen::Index>(weights.dim(1));
  DenseGrads g{Tensor(x.shape(), x.dtype()), Tensor(weights.shape(), x.dtype()), Tensor({weights.dim(1)}, x.dtype())};
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    Eigen::Map<const RowMat<T>> mx(x.data<T>().data(), n, d);
    Eigen::Map<const RowMat<T>> mw(weights.data<T>().data(), d, k);
    Eigen::Map<const RowMat<T>> dy(grad_out.data<T>().data(), n, k);
    Eigen::Map<RowMat<T>>(g.input.data<T>().data(), n, d).noalias() = dy * mw.transpose();
    Eigen::Map<RowMat<T>>(g.weights.data<T>().data(), d, k).noalias() = mx.transpose() * dy;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g.bias.data<T>().data(), k) = dy.colwise().sum();
  });
  return g;
}

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) fail(ErrorKind::Shape, "softmax_cross_entropy: logits must be [N,K]");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n)
    fail(ErrorKind::Shape, "softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                               std::to_string(n) + " rows");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= k)
      fail(ErrorKind::InvalidLabel, "label " + std::to_string(l) + " outside [0," + std::to_string(k) + ")");
  CrossEntropy ce;
  ce.probs = Tensor(logits.shape(), logits.dtype());
  double total = 0.0;
  dispatch(logits.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto z = logits.data<T>();
    auto p = ce.probs.data<T>();
    for (std::size_t i = 0; i < n; ++i) {
      const T* row = z.data() + i * k;
      const double mx = *std::max_element(row, row + k);
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += std::exp(static_cast<double>(row[j]) - mx);
      const double log_s = std::log(s);
      for (std::size_t j = 0; j < k; ++j) p[i * k + j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - mx - log_s));
      total += log_s - (static_cast<double>(row[labels[i]]) - mx);
    }
  });
  ce.loss = total / static_cast<double>(n);
  return ce;
}

Tensor softmax_cross_entropy_backward(const Tensor& probs, std::span<const int> labels, double grad_loss) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  Tensor g(probs.shape(), probs.dtype());
  dispatch(probs.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto p = probs.data<T>();
    auto d = g.data<T>();
    const T f = static_cast<T>(grad_loss / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j)
        d[i * k + j] = f * (p[i * k + j] - (static_cast<int>(j) == labels[i] ? T(1) : T(0)));
  });
  return g;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) fail(ErrorKind::Shape, "global_avg_pool expects [N,H,W,C], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  Tensor out({n, c}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t p = 0; p < hw; ++p) s += in[(b * hw + p) * c + ch];
        o[b * c + ch] = static_cast<T>(s / static_cast<double>(hw));
      }
  });
  return out;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_out) {
  const std::size_t n = input_shape[0], hw = input_shape[1] * input_shape[2], c = input_shape[3];
  Tensor dx(input_shape, grad_out.dtype());
  dispatch(grad_out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto dy = grad_out.data<T>();
    auto d = dx.data<T>();
    const T inv = static_cast<T>(1.0 / static_cast<double>(hw));
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) d[(b * hw + p) * c + ch] = dy[b * c + ch] * inv;
  });
  return dx;
}

Tensor fold_time(const Tensor& x) {
  if (x.rank() != 5) fail(ErrorKind::Shape, "fold_time expects [N,T,H,W,C], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), t = x.dim(1), hw = x.dim(2) * x.dim(3), c = x.dim(4);
  Tensor out({n, x.dim(2), x.dim(3), t * c}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ti = 0; ti < t; ++ti)
        for (std::size_t p = 0; p < hw; ++p)
          std::copy_n(in.data() + ((b * t + ti) * hw + p) * c, c, o.data() + (b * hw + p) * t * c + ti * c);
  });
  return out;
}

Tensor unfold_time(const Tensor& folded, std::size_t time) {
  const std::size_t n = folded.dim(0), h = folded.dim(1), w = folded.dim(2), tc = folded.dim(3);
  if (time == 0 || tc % time != 0) fail(ErrorKind::Shape, "unfold_time: channel count not divisible by time");
  const std::size_t c = tc / time, hw = h * w;
  Tensor out({n, time, h, w, c}, folded.dtype());
  dispatch(folded.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = folded.data<T>();
    auto o = out.data<T>();
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ti = 0; ti < time; ++ti)
        for (std::size_t p = 0; p < hw; ++p)
          std::copy_n(in.data() + (b * hw + p) * tc + ti * c, c, o.data() + ((b * time + ti) * hw + p) * c);
  });
  return out;
}

Tensor temporal_fuse(const Tensor& spatial, const Tensor& temporal) {
  if (spatial.rank() != 5 || temporal.rank() != 5)
    fail(ErrorKind::Shape, "temporal_fuse expects two [N,T,H,W,C] tensors");
  const Shape& a = spatial.shape();
  const Shape& b = temporal.shape();
  if (a[0] != b[0] || a[2] != b[2] || a[3] != b[3] || a[4] != b[4])
    fail(ErrorKind::Shape, "temporal_fuse: streams disagree outside the time axis, " + shape_str(a) + " vs " +
                               shape_str(b));
  return concat_channels(fold_time(spatial), fold_time(temporal));
}

Tensor spatial_fuse(const Tensor& a, const Tensor& b, const Tensor& kernel, const Tensor& bias, std::size_t stride) {
  if (a.shape() != b.shape())
    fail(ErrorKind::Shape, "spatial_fuse inputs differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  return conv2d(concat_channels(a, b), kernel, bias, {stride, stride}, Padding::Same);
}

Tensor add(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "add");
  Tensor out(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto pa = a.data<T>();
    auto pb = b.data<T>();
    auto po = out.data<T>();
    for (std::size_t i = 0; i < pa.size(); ++i) po[i] = pa[i] + pb[i];
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "mul");
  Tensor out(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto pa = a.data<T>();
    auto pb = b.data<T>();
    auto po = out.data<T>();
    for (std::size_t i = 0; i < pa.size(); ++i) po[i] = pa[i] * pb[i];
  });
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto pa = a.data<T>();
    auto po = out.data<T>();
    const T f = static_cast<T>(s);
    for (std::size_t i = 0; i < pa.size(); ++i) po[i] = pa[i] * f;
  });
  return out;
}

double sum(const Tensor& a) {
  return dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    double s = 0.0;
    for (T v : a.data<T>()) s += v;
    return s;
  });
}

}  // namespace ops
}  // namespace icnn
