#include "intercnn/window.hpp"

#include <cstring>

namespace icnn {

namespace {

void check_stack(const Tensor& t, std::size_t depth, std::size_t channels, const char* what) {
  if (t.rank() != 4 || t.dim(0) != depth || t.dim(3) != channels)
    fail(ErrorKind::Shape, std::string(what) + " must be [" + std::to_string(depth) + ",H,W," +
                               std::to_string(channels) + "], got " + shape_str(t.shape()));
}

Tensor stack(std::span<const SampleWindow* const> windows, Tensor SampleWindow::*member, DType dtype) {
  const Tensor& first = windows.front()->*member;
  Shape s{windows.size()};
  s.insert(s.end(), first.shape().begin(), first.shape().end());
  Tensor out(s, dtype);
  const std::size_t per = first.numel();
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const Tensor& t = windows[i]->*member;
    if (t.shape() != first.shape())
      fail(ErrorKind::Shape, "windows in a batch must share shapes: " + shape_str(t.shape()) + " vs " +
                                 shape_str(first.shape()));
    const Tensor src = t.cast(dtype);
    dispatch(dtype, [&](auto tag) {
      using T = decltype(tag);
      std::memcpy(out.data<T>().data() + i * per, src.data<T>().data(), per * sizeof(T));
    });
  }
  return out;
}

}  // namespace

void SampleWindow::validate() const {
  check_stack(side_frames, kWindowFrames, 3, "side_frames");
  check_stack(side_flows, kWindowFlows, 2, "side_flows");
  check_stack(front_frames, kWindowFrames, 3, "front_frames");
  check_stack(front_flows, kWindowFlows, 2, "front_flows");
  const Shape& s = side_frames.shape();
  for (const Tensor* t : {&side_flows, &front_frames, &front_flows})
    if (t->dim(1) != s[1] || t->dim(2) != s[2])
      fail(ErrorKind::Shape, "window streams disagree on spatial dims");
}

WindowBatch make_batch(std::span<const SampleWindow* const> windows, DType dtype) {
  if (windows.empty()) fail(ErrorKind::Contract, "cannot batch zero windows");
  WindowBatch b;
  b.side_frames = stack(windows, &SampleWindow::side_frames, dtype);
  b.side_flows = stack(windows, &SampleWindow::side_flows, dtype);
  b.front_frames = stack(windows, &SampleWindow::front_frames, dtype);
  b.front_flows = stack(windows, &SampleWindow::front_flows, dtype);
  for (const SampleWindow* w : windows) b.labels.push_back(w->label);
  return b;
}

WindowBatch make_batch(std::span<const SampleWindow> windows, DType dtype) {
  std::vector<const SampleWindow*> ptrs;
  for (const SampleWindow& w : windows) ptrs.push_back(&w);
  return make_batch(std::span<const SampleWindow* const>(ptrs), dtype);
}

}  // namespace icnn
