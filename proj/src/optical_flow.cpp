#include "intercnn/optical_flow.hpp"

#include <array>
#include <cmath>
#include <ostream>

#include "intercnn/error.hpp"

namespace icnn {

namespace {

struct Neighbour {
  int dy, dx;
  double w;
};

constexpr std::array<Neighbour, 8> kStencil{{{-1, 0, 1.0 / 6},
                                             {1, 0, 1.0 / 6},
                                             {0, -1, 1.0 / 6},
                                             {0, 1, 1.0 / 6},
                                             {-1, -1, 1.0 / 12},
                                             {-1, 1, 1.0 / 12},
                                             {1, -1, 1.0 / 12},
                                             {1, 1, 1.0 / 12}}};

struct Derivatives {
  std::size_t h = 0, w = 0;
  std::vector<double> ix, iy, it;
};

std::vector<double> pixels(const Tensor& t, const char* what) {
  std::vector<double> out(t.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = t.at(i);
    if (!std::isfinite(out[i])) fail(ErrorKind::InvalidInput, std::string(what) + " contains non-finite pixels");
  }
  return out;
}

Derivatives derivatives(const Tensor& prev, const Tensor& next) {
  if (prev.rank() != 2) fail(ErrorKind::Shape, "optical flow expects [H,W] frames, got " + shape_str(prev.shape()));
  if (prev.shape() != next.shape())
    fail(ErrorKind::Shape, "frame dims differ: " + shape_str(prev.shape()) + " vs " + shape_str(next.shape()));
  Derivatives d;
  d.h = prev.dim(0);
  d.w = prev.dim(1);
  const std::vector<double> a = pixels(prev, "prev"), b = pixels(next, "next");
  const std::size_t n = a.size();
  d.ix.resize(n);
  d.iy.resize(n);
  d.it.resize(n);
  auto at = [&](const std::vector<double>& img, std::size_t y, std::size_t x) { return img[y * d.w + x]; };
  for (std::size_t y = 0; y < d.h; ++y) {
    const std::size_t ym = y == 0 ? 0 : y - 1, yp = y + 1 == d.h ? y : y + 1;
    for (std::size_t x = 0; x < d.w; ++x) {
      const std::size_t xm = x == 0 ? 0 : x - 1, xp = x + 1 == d.w ? x : x + 1;
      const std::size_t p = y * d.w + x;
      d.ix[p] = 0.25 * ((at(a, y, xp) - at(a, y, xm)) + (at(b, y, xp) - at(b, y, xm)));
      d.iy[p] = 0.25 * ((at(a, yp, x) - at(a, ym, x)) + (at(b, yp, x) - at(b, ym, x)));
      d.it[p] = b[p] - a[p];
    }
  }
  return d;
}

bool inside(std::size_t h, std::size_t w, std::size_t y, std::size_t x, const Neighbour& n) {
  const long yy = static_cast<long>(y) + n.dy, xx = static_cast<long>(x) + n.dx;
  return yy >= 0 && xx >= 0 && yy < static_cast<long>(h) && xx < static_cast<long>(w);
}

FlowField to_field(const std::vector<double>& u, const std::vector<double>& v, std::size_t h, std::size_t w,
                   DType dtype) {
  FlowField f{Tensor({h, w}, DType::f64), Tensor({h, w}, DType::f64)};
  std::copy(v.begin(), v.end(), f.d_v.data<double>().begin());
  std::copy(u.begin(), u.end(), f.d_h.data<double>().begin());
  if (dtype != DType::f64) {
    f.d_v = f.d_v.cast(dtype);
    f.d_h = f.d_h.cast(dtype);
  }
  return f;
}

}  // namespace

FlowField horn_schunck(const Tensor& prev, const Tensor& next, const HornSchunckOptions& opts,
                       const FlowObserver& observer) {
  if (!(opts.smoothness > 0.0) || !std::isfinite(opts.smoothness))
    fail(ErrorKind::InvalidInput, "Horn-Schunck smoothness must be positive");
  if (opts.iterations < 1) fail(ErrorKind::InvalidInput, "Horn-Schunck needs at least one iteration");
  const Derivatives d = derivatives(prev, next);
  const std::size_t h = d.h, w = d.w, n = h * w;
  const double a2 = opts.smoothness * opts.smoothness;

  // Per-pixel neighbour lists and total weight.
  std::vector<std::array<std::pair<std::size_t, double>, 8>> nbr(n);
  std::vector<std::size_t> count(n, 0);
  std::vector<double> degree(n, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      for (const Neighbour& s : kStencil)
        if (inside(h, w, y, x, s)) {
          const std::size_t q = (y + static_cast<std::size_t>(static_cast<long>(s.dy))) * w +
                                (x + static_cast<std::size_t>(static_cast<long>(s.dx)));
          nbr[p][count[p]++] = {q, s.w};
          degree[p] += s.w;
        }
    }

  std::vector<double> u(n, 0.0), v(n, 0.0), un(n), vn(n);
  for (std::size_t iter = 1; iter <= opts.iterations; ++iter) {
    for (std::size_t p = 0; p < n; ++p) {
      double ub = 0.0, vb = 0.0;
      for (std::size_t k = 0; k < count[p]; ++k) {
        ub += nbr[p][k].second * u[nbr[p][k].first];
        vb += nbr[p][k].second * v[nbr[p][k].first];
      }
      ub /= degree[p];
      vb /= degree[p];
      const double ix = d.ix[p], iy = d.iy[p];
      const double r = (ix * ub + iy * vb + d.it[p]) / (a2 * degree[p] + ix * ix + iy * iy);
      un[p] = ub - ix * r;
      vn[p] = vb - iy * r;
    }
    u.swap(un);
    v.swap(vn);
    if (observer) observer(iter, to_field(u, v, h, w, DType::f64));
  }
  return to_field(u, v, h, w, prev.dtype());
}

double horn_schunck_energy(const Tensor& prev, const Tensor& next, const FlowField& flow, double smoothness) {
  const Derivatives d = derivatives(prev, next);
  if (flow.d_h.shape() != prev.shape() || flow.d_v.shape() != prev.shape())
    fail(ErrorKind::Shape, "flow field dims differ from the frames");
  const std::size_t h = d.h, w = d.w;
  double data = 0.0, smooth = 0.0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      const double u = flow.d_h.at(p), v = flow.d_v.at(p);
      const double r = d.ix[p] * u + d.iy[p] * v + d.it[p];
      data += r * r;
      // each undirected edge once: forward half of the stencil
      for (std::size_t k : {1u, 3u, 6u, 7u}) {
        const Neighbour& s = kStencil[k];
        if (!inside(h, w, y, x, s)) continue;
        const std::size_t q = (y + static_cast<std::size_t>(static_cast<long>(s.dy))) * w +
                              (x + static_cast<std::size_t>(static_cast<long>(s.dx)));
        const double du = u - flow.d_h.at(q), dv = v - flow.d_v.at(q);
        smooth += s.w * (du * du + dv * dv);
      }
    }
  return data + smoothness * smoothness * smooth;
}

std::vector<FlowField> flow_sequence(const Tensor& frames, const HornSchunckOptions& opts) {
  if (frames.rank() != 3) fail(ErrorKind::Shape, "flow_sequence expects [T,H,W], got " + shape_str(frames.shape()));
  const std::size_t t = frames.dim(0), h = frames.dim(1), w = frames.dim(2);
  if (t < 2) fail(ErrorKind::InsufficientFrames, "flow_sequence needs at least 2 frames, got " + std::to_string(t));
  std::vector<Tensor> gray;
  gray.reserve(t);
  for (std::size_t i = 0; i < t; ++i) {
    Tensor f({h, w}, frames.dtype());
    for (std::size_t k = 0; k < h * w; ++k) f.set(k, frames.at(i * h * w + k));
    gray.push_back(std::move(f));
  }
  std::vector<FlowField> out;
  out.reserve(t - 1);
  for (std::size_t i = 0; i + 1 < t; ++i) out.push_back(horn_schunck(gray[i], gray[i + 1], opts));
  return out;
}

Tensor to_grayscale(const Tensor& rgb) {
  if (rgb.rank() < 2 || rgb.dim(-1) != 3)
    fail(ErrorKind::Shape, "to_grayscale expects a trailing RGB axis, got " + shape_str(rgb.shape()));
  Shape s(rgb.shape().begin(), rgb.shape().end() - 1);
  Tensor out(s, rgb.dtype());
  dispatch(rgb.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = rgb.data<T>();
    auto y = out.data<T>();
    for (std::size_t i = 0; i < y.size(); ++i)
      y[i] = static_cast<T>(0.299 * in[3 * i] + 0.587 * in[3 * i + 1] + 0.114 * in[3 * i + 2]);
  });
  return out;
}

Tensor stack_flows(const std::vector<FlowField>& flows, DType dtype) {
  if (flows.empty()) fail(ErrorKind::InsufficientFrames, "no flow fields to stack");
  const std::size_t h = flows[0].d_v.dim(0), w = flows[0].d_v.dim(1);
  Tensor out({flows.size(), h, w, 2}, dtype);
  for (std::size_t t = 0; t < flows.size(); ++t) {
    if (flows[t].d_v.shape() != Shape{h, w} || flows[t].d_h.shape() != Shape{h, w})
      fail(ErrorKind::Shape, "flow fields differ in size");
    for (std::size_t p = 0; p < h * w; ++p) {
      out.set((t * h * w + p) * 2, flows[t].d_v.at(p));
      out.set((t * h * w + p) * 2 + 1, flows[t].d_h.at(p));
    }
  }
  return out;
}

void write_quiver(std::ostream& os, const FlowField& flow, std::size_t step) {
  if (step == 0) fail(ErrorKind::InvalidInput, "quiver step must be positive");
  const std::size_t h = flow.d_v.dim(0), w = flow.d_v.dim(1);
  for (std::size_t y = 0; y < h; y += step)
    for (std::size_t x = 0; x < w; x += step)
      os << x << ' ' << y << ' ' << flow.d_h.at(y * w + x) << ' ' << flow.d_v.at(y * w + x) << '\n';
}

}  // namespace icnn
