#pragma once

#include <span>
#include <vector>

#include "intercnn/tensor.hpp"

namespace icnn {

inline constexpr std::size_t kWindowFrames = 15;
inline constexpr std::size_t kWindowFlows = kWindowFrames - 1;

/// One classification input: 15 RGB frames and 14 flow fields per view.
/// Frames are [15,H,W,3] in [0,1]; flows are [14,H,W,2] ordered (d_v, d_h).
struct SampleWindow {
  Tensor side_frames;
  Tensor side_flows;
  Tensor front_frames;
  Tensor front_flows;
  int label = 0;

  void validate() const;
};

/// Windows stacked along a leading batch axis.
struct WindowBatch {
  Tensor side_frames;   // [N,15,H,W,3]
  Tensor side_flows;    // [N,14,H,W,2]
  Tensor front_frames;  // [N,15,H,W,3]
  Tensor front_flows;   // [N,14,H,W,2]
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

WindowBatch make_batch(std::span<const SampleWindow> windows, DType dtype = DType::f32);
WindowBatch make_batch(std::span<const SampleWindow* const> windows, DType dtype = DType::f32);

}  // namespace icnn
