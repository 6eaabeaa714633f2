#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "intercnn/tensor.hpp"

namespace icnn {

/// Dense flow between two frames, in pixels per frame.
struct FlowField {
  Tensor d_v;  // [H,W] vertical component
  Tensor d_h;  // [H,W] horizontal component
};

struct HornSchunckOptions {
  double smoothness = 0.5;
  std::size_t iterations = 100;
};

/// Called after every relaxation sweep with the 1-based iteration number.
using FlowObserver = std::function<void(std::size_t iteration, const FlowField& flow)>;

/// Horn-Schunck flow between grayscale frames [H,W] with values in [0,1].
/// Jacobi relaxation from zero flow. Spatial derivatives are central
/// differences with clamped borders averaged over both frames; the temporal
/// derivative is next - prev. The smoothness term uses the 8-neighbour
/// stencil (1/6 edge, 1/12 diagonal) restricted to pixels inside the frame.
FlowField horn_schunck(const Tensor& prev, const Tensor& next, const HornSchunckOptions& opts = {},
                       const FlowObserver& observer = {});

/// Discrete objective minimized by horn_schunck:
/// sum (I_x u + I_y v + I_t)^2 + smoothness^2 * sum_edges w (du^2 + dv^2).
double horn_schunck_energy(const Tensor& prev, const Tensor& next, const FlowField& flow, double smoothness);

/// T grayscale frames [T,H,W] -> T-1 flow fields between consecutive frames.
std::vector<FlowField> flow_sequence(const Tensor& frames, const HornSchunckOptions& opts = {});

/// Luma (0.299, 0.587, 0.114) over the trailing RGB axis: [...,3] -> [...].
Tensor to_grayscale(const Tensor& rgb);

/// Stacks fields into [T-1,H,W,2] with channels ordered (d_v, d_h).
Tensor stack_flows(const std::vector<FlowField>& flows, DType dtype = DType::f32);

/// Plain-text rows "x y d_h d_v" on a grid subsampled by step.
void write_quiver(std::ostream& os, const FlowField& flow, std::size_t step = 1);

}  // namespace icnn
