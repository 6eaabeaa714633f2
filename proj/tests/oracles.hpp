#pragma once

// Brute-force reference implementations used only by the tests. They share
// nothing with the library kernels beyond the Tensor container.

#include <cmath>
#include <random>

#include "intercnn/tensor.hpp"

namespace oracle {

using icnn::Shape;
using icnn::Tensor;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, icnn::DType dtype = icnn::DType::f64,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape, dtype);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, u(rng));
  return t;
}

inline std::size_t pad_before_same(std::size_t in, std::size_t k, std::size_t s) {
  const std::size_t out = (in + s - 1) / s;
  const long total = std::max<long>(0, static_cast<long>((out - 1) * s + k) - static_cast<long>(in));
  return static_cast<std::size_t>(total / 2);
}

/// Direct 3D convolution in double precision: [N,T,H,W,Ci] * [kt,kh,kw,Ci,Co].
inline Tensor conv3d(const Tensor& x, const Tensor& k, const Tensor& b, std::size_t st, std::size_t sh, std::size_t sw,
                     bool same) {
  const auto& xs = x.shape();
  const auto& ks = k.shape();
  const std::size_t N = xs[0], T = xs[1], H = xs[2], W = xs[3], Ci = xs[4];
  const std::size_t KT = ks[0], KH = ks[1], KW = ks[2], Co = ks[4];
  auto out_dim = [&](std::size_t in, std::size_t kk, std::size_t s) {
    return same ? (in + s - 1) / s : (in - kk) / s + 1;
  };
  const std::size_t To = out_dim(T, KT, st), Ho = out_dim(H, KH, sh), Wo = out_dim(W, KW, sw);
  const long pt = same ? static_cast<long>(pad_before_same(T, KT, st)) : 0;
  const long ph = same ? static_cast<long>(pad_before_same(H, KH, sh)) : 0;
  const long pw = same ? static_cast<long>(pad_before_same(W, KW, sw)) : 0;
  Tensor y({N, To, Ho, Wo, Co}, icnn::DType::f64);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t ot = 0; ot < To; ++ot)
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow)
          for (std::size_t co = 0; co < Co; ++co) {
            double acc = b.empty() ? 0.0 : b.at(co);
            for (std::size_t a = 0; a < KT; ++a)
              for (std::size_t i = 0; i < KH; ++i)
                for (std::size_t j = 0; j < KW; ++j) {
                  const long it = static_cast<long>(ot * st + a) - pt;
                  const long ih = static_cast<long>(oh * sh + i) - ph;
                  const long iw = static_cast<long>(ow * sw + j) - pw;
                  if (it < 0 || ih < 0 || iw < 0 || it >= static_cast<long>(T) || ih >= static_cast<long>(H) ||
                      iw >= static_cast<long>(W))
                    continue;
                  for (std::size_t ci = 0; ci < Ci; ++ci)
                    acc += x.at((((n * T + it) * H + ih) * W + iw) * Ci + ci) *
                           k.at((((a * KH + i) * KW + j) * Ci + ci) * Co + co);
                }
            y.set((((n * To + ot) * Ho + oh) * Wo + ow) * Co + co, acc);
          }
  return y;
}

/// Direct 2D convolution: six nested loops over (n, oh, ow, co, i, j) plus ci.
inline Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b, std::size_t sh, std::size_t sw, bool same) {
  const auto& xs = x.shape();
  const auto& ks = k.shape();
  const std::size_t N = xs[0], H = xs[1], W = xs[2], Ci = xs[3];
  const std::size_t KH = ks[0], KW = ks[1], Co = ks[3];
  const std::size_t Ho = same ? (H + sh - 1) / sh : (H - KH) / sh + 1;
  const std::size_t Wo = same ? (W + sw - 1) / sw : (W - KW) / sw + 1;
  const long ph = same ? static_cast<long>(pad_before_same(H, KH, sh)) : 0;
  const long pw = same ? static_cast<long>(pad_before_same(W, KW, sw)) : 0;
  Tensor y({N, Ho, Wo, Co}, icnn::DType::f64);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t oh = 0; oh < Ho; ++oh)
      for (std::size_t ow = 0; ow < Wo; ++ow)
        for (std::size_t co = 0; co < Co; ++co) {
          double acc = b.empty() ? 0.0 : b.at(co);
          for (std::size_t i = 0; i < KH; ++i)
            for (std::size_t j = 0; j < KW; ++j) {
              const long ih = static_cast<long>(oh * sh + i) - ph;
              const long iw = static_cast<long>(ow * sw + j) - pw;
              if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W)) continue;
              for (std::size_t ci = 0; ci < Ci; ++ci)
                acc += x.at(((n * H + ih) * W + iw) * Ci + ci) * k.at(((i * KW + j) * Ci + ci) * Co + co);
            }
          y.set(((n * Ho + oh) * Wo + ow) * Co + co, acc);
        }
  return y;
}

/// Depthwise convolution as one single-channel conv2d oracle per channel.
inline Tensor depthwise_conv2d(const Tensor& x, const Tensor& k, const Tensor& b, std::size_t sh, std::size_t sw,
                               bool same) {
  const auto& xs = x.shape();
  const std::size_t N = xs[0], H = xs[1], W = xs[2], C = xs[3], KH = k.dim(0), KW = k.dim(1);
  Tensor y;
  for (std::size_t c = 0; c < C; ++c) {
    Tensor xc({N, H, W, 1}, icnn::DType::f64), kc({KH, KW, 1, 1}, icnn::DType::f64), bc({1}, icnn::DType::f64);
    for (std::size_t p = 0; p < N * H * W; ++p) xc.set(p, x.at(p * C + c));
    for (std::size_t t = 0; t < KH * KW; ++t) kc.set(t, k.at(t * C + c));
    bc.set(0, b.empty() ? 0.0 : b.at(c));
    Tensor yc = conv2d(xc, kc, bc, sh, sw, same);
    if (y.empty()) y = Tensor({yc.dim(0), yc.dim(1), yc.dim(2), C}, icnn::DType::f64);
    for (std::size_t p = 0; p < yc.numel(); ++p) y.set(p * C + c, yc.at(p));
  }
  return y;
}

inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t N = x.dim(0), D = x.dim(1), K = w.dim(1);
  Tensor y({N, K}, icnn::DType::f64);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < K; ++k) {
      double acc = b.at(k);
      for (std::size_t d = 0; d < D; ++d) acc += x.at(n * D + d) * w.at(d * K + k);
      y.set(n * K + k, acc);
    }
  return y;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

}  // namespace oracle
