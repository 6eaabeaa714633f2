#include <optional>
#include <type_traits>

#include <Eigen/Core>

#include "intercnn/ops.hpp"

namespace icnn::ops {

std::size_t conv_out_dim(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding) {
  if (stride == 0) fail(ErrorKind::Shape, "stride must be >= 1");
  if (padding == Padding::Same) return (in + stride - 1) / stride;
  if (kernel > in) fail(ErrorKind::Shape, "kernel extent " + std::to_string(kernel) + " exceeds input extent " + std::to_string(in));
  return (in - kernel) / stride + 1;
}

std::size_t same_pad_before(std::size_t in, std::size_t kernel, std::size_t stride) {
  const std::size_t out = (in + stride - 1) / stride;
  const std::size_t needed = (out - 1) * stride + kernel;
  const std::size_t total = needed > in ? needed - in : 0;
  return total / 2;
}

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Convolution over three spatial axes; 2D convolutions run with a unit time axis.
struct Geometry {
  std::size_t n, ti, hi, wi, ci;
  std::size_t kt, kh, kw, co;
  std::size_t st, sh, sw;
  std::size_t to, ho, wo;
  std::ptrdiff_t pt, ph, pw;

  std::size_t rows() const { return to * ho * wo; }
  std::size_t cols() const { return kt * kh * kw * ci; }
  bool pointwise() const { return kt == 1 && kh == 1 && kw == 1 && st == 1 && sh == 1 && sw == 1; }
};

Geometry make_geometry(const Shape& in, const Shape& k, std::array<std::size_t, 3> stride, Padding padding,
                       bool depthwise) {
  Geometry g{};
  g.n = in[0];
  g.ti = in[1];
  g.hi = in[2];
  g.wi = in[3];
  g.ci = in[4];
  g.kt = k[0];
  g.kh = k[1];
  g.kw = k[2];
  if (depthwise) {
    if (k[3] != g.ci)
      fail(ErrorKind::Shape, "depthwise kernel channels " + std::to_string(k[3]) + " != input channels " + std::to_string(g.ci));
    g.co = g.ci;
  } else {
    if (k[3] != g.ci)
      fail(ErrorKind::Shape, "kernel input channels " + std::to_string(k[3]) + " != input channels " + std::to_string(g.ci));
    g.co = k[4];
  }
  for (auto s : stride)
    if (s == 0) fail(ErrorKind::Shape, "stride must be >= 1");
  g.st = stride[0];
  g.sh = stride[1];
  g.sw = stride[2];
  g.to = conv_out_dim(g.ti, g.kt, g.st, padding);
  g.ho = conv_out_dim(g.hi, g.kh, g.sh, padding);
  g.wo = conv_out_dim(g.wi, g.kw, g.sw, padding);
  if (padding == Padding::Same) {
    g.pt = static_cast<std::ptrdiff_t>(same_pad_before(g.ti, g.kt, g.st));
    g.ph = static_cast<std::ptrdiff_t>(same_pad_before(g.hi, g.kh, g.sh));
    g.pw = static_cast<std::ptrdiff_t>(same_pad_before(g.wi, g.kw, g.sw));
  }
  return g;
}

template <class T>
void im2col(const Geometry& g, const T* x, T* cols) {
  const std::size_t ncols = g.cols();
  for (std::size_t ot = 0; ot < g.to; ++ot)
    for (std::size_t oh = 0; oh < g.ho; ++oh)
      for (std::size_t ow = 0; ow < g.wo; ++ow) {
        T* row = cols + ((ot * g.ho + oh) * g.wo + ow) * ncols;
        for (std::size_t dt = 0; dt < g.kt; ++dt) {
          const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot * g.st + dt) - g.pt;
          for (std::size_t dh = 0; dh < g.kh; ++dh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.sh + dh) - g.ph;
            for (std::size_t dw = 0; dw < g.kw; ++dw, row += g.ci) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.sw + dw) - g.pw;
              if (it < 0 || ih < 0 || iw < 0 || it >= static_cast<std::ptrdiff_t>(g.ti) ||
                  ih >= static_cast<std::ptrdiff_t>(g.hi) || iw >= static_cast<std::ptrdiff_t>(g.wi)) {
                std::fill(row, row + g.ci, T(0));
              } else {
                const T* src = x + ((static_cast<std::size_t>(it) * g.hi + static_cast<std::size_t>(ih)) * g.wi +
                                    static_cast<std::size_t>(iw)) * g.ci;
                std::copy(src, src + g.ci, row);
              }
            }
          }
        }
      }
}

template <class T>
void col2im(const Geometry& g, const T* cols, T* dx) {
  const std::size_t ncols = g.cols();
  for (std::size_t ot = 0; ot < g.to; ++ot)
    for (std::size_t oh = 0; oh < g.ho; ++oh)
      for (std::size_t ow = 0; ow < g.wo; ++ow) {
        const T* row = cols + ((ot * g.ho + oh) * g.wo + ow) * ncols;
        for (std::size_t dt = 0; dt < g.kt; ++dt) {
          const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot * g.st + dt) - g.pt;
          for (std::size_t dh = 0; dh < g.kh; ++dh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.sh + dh) - g.ph;
            for (std::size_t dw = 0; dw < g.kw; ++dw, row += g.ci) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.sw + dw) - g.pw;
              if (it < 0 || ih < 0 || iw < 0 || it >= static_cast<std::ptrdiff_t>(g.ti) ||
                  ih >= static_cast<std::ptrdiff_t>(g.hi) || iw >= static_cast<std::ptrdiff_t>(g.wi))
                continue;
              T* dst = dx + ((static_cast<std::size_t>(it) * g.hi + static_cast<std::size_t>(ih)) * g.wi +
                             static_cast<std::size_t>(iw)) * g.ci;
              for (std::size_t c = 0; c < g.ci; ++c) dst[c] += row[c];
            }
          }
        }
      }
}

void check_same_dtype(const Tensor& a, const Tensor& b, const char* what) {
  if (a.dtype() != b.dtype()) fail(ErrorKind::Contract, std::string("dtype mismatch in ") + what);
}

void check_bias(const Tensor& bias, std::size_t channels, const char* what) {
  if (bias.empty()) return;
  if (bias.rank() != 1 || bias.dim(0) != channels)
    fail(ErrorKind::Shape, std::string(what) + ": bias shape " + shape_str(bias.shape()) + " does not match " +
                               std::to_string(channels) + " output channels");
}

// Forward passes accumulate in double and round once, so f32 outputs carry a
// single rounding error regardless of the reduction length.
template <class T>
Tensor conv_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias, const Geometry& g) {
  Tensor out({g.n, g.to, g.ho, g.wo, g.co}, input.dtype());
  const T* x = input.data<T>().data();
  T* y = out.data<T>().data();
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto ncols = static_cast<Eigen::Index>(g.cols());
  const auto co = static_cast<Eigen::Index>(g.co);
  const RowMat<double> k = ConstMatMap<T>(kernel.data<T>().data(), ncols, co).template cast<double>();
  RowMat<double> b = RowMat<double>::Zero(1, co);
  if (!bias.empty()) b = Eigen::Map<const RowMat<T>>(bias.data<T>().data(), 1, co).template cast<double>();
  const std::size_t in_stride = g.ti * g.hi * g.wi * g.ci;
  AlignedVector<T> cols;
  if (!g.pointwise()) cols.resize(g.rows() * g.cols());
  RowMat<double> acc;
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* xn = x + n * in_stride;
    const T* patches = xn;
    if (!g.pointwise()) {
      im2col(g, xn, cols.data());
      patches = cols.data();
    }
    ConstMatMap<T> p(patches, rows, ncols);
    if constexpr (std::is_same_v<T, double>) {
      MatMap<T> yn(y + n * g.rows() * g.co, rows, co);
      yn.noalias() = p * k;
      yn.rowwise() += b.row(0);
    } else {
      acc.noalias() = p.template cast<double>() * k;
      acc.rowwise() += b.row(0);
      MatMap<T>(y + n * g.rows() * g.co, rows, co) = acc.template cast<T>();
    }
  }
  return out;
}

template <class T>
ConvGrads conv_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out, const Geometry& g,
                        bool need_input, bool need_params) {
  ConvGrads grads;
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto ncols = static_cast<Eigen::Index>(g.cols());
  const auto co = static_cast<Eigen::Index>(g.co);
  ConstMatMap<T> k(kernel.data<T>().data(), ncols, co);
  const T* x = input.data<T>().data();
  const T* dy = grad_out.data<T>().data();
  const std::size_t in_stride = g.ti * g.hi * g.wi * g.ci;

  T* dx = nullptr;
  if (need_input) {
    grads.input = Tensor(input.shape(), input.dtype());
    dx = grads.input.template data<T>().data();
  }
  std::optional<MatMap<T>> dk;
  std::optional<Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>> db;
  if (need_params) {
    grads.kernel = Tensor(kernel.shape(), kernel.dtype());
    grads.bias = Tensor({g.co}, kernel.dtype());
    dk.emplace(grads.kernel.template data<T>().data(), ncols, co);
    db.emplace(grads.bias.template data<T>().data(), co);
  }

  AlignedVector<T> cols;
  RowMat<T> dcols;
  if (!g.pointwise()) cols.resize(g.rows() * g.cols());
  for (std::size_t n = 0; n < g.n; ++n) {
    ConstMatMap<T> dyn(dy + n * g.rows() * g.co, rows, co);
    const T* xn = x + n * in_stride;
    if (need_params) {
      const T* patches = xn;
      if (!g.pointwise()) {
        im2col(g, xn, cols.data());
        patches = cols.data();
      }
      ConstMatMap<T> p(patches, rows, ncols);
      dk->noalias() += p.transpose() * dyn;
      *db += dyn.colwise().sum();
    }
    if (need_input) {
      if (g.pointwise()) {
        MatMap<T> dxn(dx + n * in_stride, rows, ncols);
        dxn.noalias() = dyn * k.transpose();
      } else {
        dcols.noalias() = dyn * k.transpose();
        col2im(g, dcols.data(), dx + n * in_stride);
      }
    }
  }
  return grads;
}

template <class T>
Tensor depthwise_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias, const Geometry& g) {
  Tensor out({g.n, g.to, g.ho, g.wo, g.co}, input.dtype());
  const T* x = input.data<T>().data();
  const T* k = kernel.data<T>().data();
  T* y = out.data<T>().data();
  const std::size_t c = g.ci;
  std::vector<double> acc(c);
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t oh = 0; oh < g.ho; ++oh)
      for (std::size_t ow = 0; ow < g.wo; ++ow) {
        if (bias.empty()) {
          std::fill(acc.begin(), acc.end(), 0.0);
        } else {
          const T* b = bias.data<T>().data();
          std::copy(b, b + c, acc.begin());
        }
        for (std::size_t dh = 0; dh < g.kh; ++dh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.sh + dh) - g.ph;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.hi)) continue;
          for (std::size_t dw = 0; dw < g.kw; ++dw) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.sw + dw) - g.pw;
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.wi)) continue;
            const T* xi = x + ((n * g.hi + static_cast<std::size_t>(ih)) * g.wi + static_cast<std::size_t>(iw)) * c;
            const T* kk = k + (dh * g.kw + dw) * c;
            for (std::size_t ch = 0; ch < c; ++ch)
              acc[ch] += static_cast<double>(xi[ch]) * static_cast<double>(kk[ch]);
          }
        }
        T* yo = y + ((n * g.ho + oh) * g.wo + ow) * c;
        for (std::size_t ch = 0; ch < c; ++ch) yo[ch] = static_cast<T>(acc[ch]);
      }
  return out;
}

template <class T>
ConvGrads depthwise_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out, const Geometry& g,
                             bool need_input, bool need_params) {
  ConvGrads grads;
  const T* x = input.data<T>().data();
  const T* k = kernel.data<T>().data();
  const T* dy = grad_out.data<T>().data();
  T* dx = nullptr;
  T* dk = nullptr;
  T* db = nullptr;
  if (need_input) {
    grads.input = Tensor(input.shape(), input.dtype());
    dx = grads.input.template data<T>().data();
  }
  if (need_params) {
    grads.kernel = Tensor(kernel.shape(), kernel.dtype());
    grads.bias = Tensor({g.ci}, kernel.dtype());
    dk = grads.kernel.template data<T>().data();
    db = grads.bias.template data<T>().data();
  }
  const std::size_t c = g.ci;
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t oh = 0; oh < g.ho; ++oh)
      for (std::size_t ow = 0; ow < g.wo; ++ow) {
        const T* go = dy + ((n * g.ho + oh) * g.wo + ow) * c;
        if (db)
          for (std::size_t ch = 0; ch < c; ++ch) db[ch] += go[ch];
        for (std::size_t dh = 0; dh < g.kh; ++dh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.sh + dh) - g.ph;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.hi)) continue;
          for (std::size_t dw = 0; dw < g.kw; ++dw) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.sw + dw) - g.pw;
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.wi)) continue;
            const std::size_t in_off =
                ((n * g.hi + static_cast<std::size_t>(ih)) * g.wi + static_cast<std::size_t>(iw)) * c;
            const std::size_t k_off = (dh * g.kw + dw) * c;
            if (dx)
              for (std::size_t ch = 0; ch < c; ++ch) dx[in_off + ch] += go[ch] * k[k_off + ch];
            if (dk)
              for (std::size_t ch = 0; ch < c; ++ch) dk[k_off + ch] += go[ch] * x[in_off + ch];
          }
        }
      }
  return grads;
}

Shape as5d(const Shape& s) { return {s[0], 1, s[1], s[2], s[3]}; }
Shape kernel_as5d(const Shape& k) { return {1, k[0], k[1], k[2], k[3]}; }

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    fail(ErrorKind::Shape, std::string(what) + " expects rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
}

}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::array<std::size_t, 3> stride,
              Padding padding) {
  require_rank(input, 5, "conv3d input");
  require_rank(kernel, 5, "conv3d kernel");
  check_same_dtype(input, kernel, "conv3d");
  const Geometry g = make_geometry(input.shape(), kernel.shape(), stride, padding, false);
  check_bias(bias, g.co, "conv3d");
  return dispatch(input.dtype(), [&](auto tag) {
    return conv_forward<decltype(tag)>(input, kernel, bias, g);
  });
}

ConvGrads conv3d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                          std::array<std::size_t, 3> stride, Padding padding, bool need_input, bool need_params) {
  const Geometry g = make_geometry(input.shape(), kernel.shape(), stride, padding, false);
  return dispatch(input.dtype(), [&](auto tag) {
    return conv_backward<decltype(tag)>(input, kernel, grad_out, g, need_input, need_params);
  });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::array<std::size_t, 2> stride,
              Padding padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  Tensor y = conv3d(input.reshaped(as5d(input.shape())), kernel.reshaped(kernel_as5d(kernel.shape())), bias,
                    {1, stride[0], stride[1]}, padding);
  const Shape& s = y.shape();
  return std::move(y).reshaped({s[0], s[2], s[3], s[4]});
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                          std::array<std::size_t, 2> stride, Padding padding, bool need_input, bool need_params) {
  const Shape& d = grad_out.shape();
  ConvGrads g5 = conv3d_backward(input.reshaped(as5d(input.shape())), kernel.reshaped(kernel_as5d(kernel.shape())),
                                 grad_out.reshaped({d[0], 1, d[1], d[2], d[3]}), {1, stride[0], stride[1]}, padding,
                                 need_input, need_params);
  if (need_input) g5.input = std::move(g5.input).reshaped(input.shape());
  if (need_params) g5.kernel = std::move(g5.kernel).reshaped(kernel.shape());
  return g5;
}

Tensor depthwise_conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        std::array<std::size_t, 2> stride, Padding padding) {
  require_rank(input, 4, "depthwise_conv2d input");
  require_rank(kernel, 3, "depthwise_conv2d kernel");
  check_same_dtype(input, kernel, "depthwise_conv2d");
  const Shape& k = kernel.shape();
  const Geometry g =
      make_geometry(as5d(input.shape()), {1, k[0], k[1], k[2]}, {1, stride[0], stride[1]}, padding, true);
  check_bias(bias, g.co, "depthwise_conv2d");
  Tensor y = dispatch(input.dtype(), [&](auto tag) {
    return depthwise_forward<decltype(tag)>(input, kernel, bias, g);
  });
  return std::move(y).reshaped({g.n, g.ho, g.wo, g.co});
}

ConvGrads depthwise_conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                                    std::array<std::size_t, 2> stride, Padding padding, bool need_input,
                                    bool need_params) {
  const Shape& k = kernel.shape();
  const Geometry g =
      make_geometry(as5d(input.shape()), {1, k[0], k[1], k[2]}, {1, stride[0], stride[1]}, padding, true);
  return dispatch(input.dtype(), [&](auto tag) {
    return depthwise_backward<decltype(tag)>(input, kernel, grad_out, g, need_input, need_params);
  });
}

}  // namespace icnn::ops
