#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "intercnn/params.hpp"

namespace icnn {

enum class BlockVariant { Vanilla, MobileNet, MobileNetV2 };

struct BlockKind {
  BlockVariant variant = BlockVariant::MobileNet;
  double width_mult = 1.0;       // MobileNet alpha
  double resolution_mult = 1.0;  // MobileNet rho
  std::size_t expansion = 6;     // MobileNetV2 t

  static BlockKind vanilla() { return {BlockVariant::Vanilla}; }
  static BlockKind mobilenet(double alpha = 1.0, double rho = 1.0) { return {BlockVariant::MobileNet, alpha, rho}; }
  static BlockKind mobilenet_v2(std::size_t t = 6) { return {BlockVariant::MobileNetV2, 1.0, 1.0, t}; }
  void validate() const;
};

const char* block_variant_name(BlockVariant v);
BlockVariant parse_block_variant(const std::string& s);

inline constexpr std::size_t kKernel2d = 3;
inline constexpr std::size_t kKernel3d = 3;
inline constexpr double kBnMomentum = 0.99;
inline constexpr double kBnEpsilon = 1e-5;

/// Convolution flavour used inside a stage.
enum class ConvType { Standard2d, Depthwise2d, Standard3d };

/// FLOPs of a convolution producing out_positions spatial outputs; multiply and
/// add counted separately, plus one add per output element for the bias.
std::uint64_t conv_flops(std::uint64_t out_positions, std::uint64_t taps, std::uint64_t in_channels,
                         std::uint64_t out_channels, bool bias = true);

struct ConvLayer {
  ConvType type = ConvType::Standard2d;
  std::size_t kernel = 0;  // store indices
  std::size_t bias = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t extent = 3;
  std::size_t stride = 1;

  static ConvLayer create(ParamStore& store, const std::string& prefix, ConvType type, std::size_t in,
                          std::size_t out, std::size_t extent, std::size_t stride, InitScheme init,
                          std::uint64_t seed);
  Var forward(const ForwardContext& ctx, Var x) const;
  Shape output_shape(const Shape& in) const;
  std::uint64_t flops(const Shape& in) const;
  std::vector<std::size_t> param_indices() const { return {kernel, bias}; }
};

struct NormLayer {
  std::size_t gamma = 0, beta = 0, mean = 0, var = 0;

  static NormLayer create(ParamStore& store, const std::string& prefix, std::size_t channels);
  Var forward(const ForwardContext& ctx, Var x) const;
  std::uint64_t flops(const Shape& in) const;
  std::vector<std::size_t> param_indices() const { return {gamma, beta}; }
};

/// conv -> BN -> activation.
struct Stage {
  ConvLayer conv;
  NormLayer norm;
  Activation act = Activation::Relu;

  static Stage create(ParamStore& store, const std::string& prefix, ConvType type, std::size_t in, std::size_t out,
                      std::size_t extent, std::size_t stride, Activation act, std::uint64_t seed);
  Var forward(const ForwardContext& ctx, Var x) const;
  Shape output_shape(const Shape& in) const { return conv.output_shape(in); }
  std::uint64_t flops(const Shape& in) const;
  std::vector<std::size_t> param_indices() const;
};

/// One of the three 2D block families.
class CnnBlock {
 public:
  static CnnBlock create(ParamStore& store, const std::string& prefix, const BlockKind& kind, std::size_t in,
                         std::size_t out, std::size_t stride, std::uint64_t seed);

  Var forward(const ForwardContext& ctx, Var x) const;
  Shape output_shape(const Shape& in) const;
  std::uint64_t flops(const Shape& in) const;
  std::vector<std::size_t> param_indices() const;

  const BlockKind& kind() const { return kind_; }
  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t stride() const { return stride_; }
  bool has_skip() const { return skip_; }
  const std::vector<Stage>& stages() const { return stages_; }

 private:
  BlockKind kind_;
  std::size_t in_ = 0, out_ = 0, stride_ = 1;
  std::vector<Stage> stages_;
  bool skip_ = false;
};

/// conv3d (same padding) -> BN -> SELU.
class Cnn3dBlock {
 public:
  static Cnn3dBlock create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                           std::uint64_t seed);
  Var forward(const ForwardContext& ctx, Var x) const { return stage_.forward(ctx, x); }
  Shape output_shape(const Shape& in) const { return stage_.output_shape(in); }
  std::uint64_t flops(const Shape& in) const { return stage_.flops(in); }
  std::vector<std::size_t> param_indices() const { return stage_.param_indices(); }
  const Stage& stage() const { return stage_; }

 private:
  Stage stage_;
};

/// Concatenation followed by a 1x1 convolution mapping 2C -> 2C.
class SpatialFusion {
 public:
  static SpatialFusion create(ParamStore& store, const std::string& prefix, std::size_t channels, std::size_t stride,
                              std::uint64_t seed);
  Var forward(const ForwardContext& ctx, Var a, Var b) const;
  Shape output_shape(const Shape& in) const;
  std::uint64_t flops(const Shape& in) const;
  std::vector<std::size_t> param_indices() const { return conv_.param_indices(); }
  const ConvLayer& conv() const { return conv_; }

 private:
  ConvLayer conv_;
};

/// Two-stream residual module: per-stream blocks, spatial fusion, per-stream
/// decomposition blocks and identity (or 1x1 projection) skips.
class InterweavingModule {
 public:
  static InterweavingModule create(ParamStore& store, const std::string& prefix, const BlockKind& kind,
                                   std::size_t in_channels, std::size_t out_channels, std::size_t stride,
                                   std::uint64_t seed);

  std::pair<Var, Var> forward(const ForwardContext& ctx, Var x1, Var x2) const;
  Shape output_shape(const Shape& in) const;
  std::uint64_t flops(const Shape& in) const;
  std::vector<std::size_t> param_indices() const;

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t stride() const { return stride_; }
  bool has_projection() const { return proj1_.has_value(); }

  const CnnBlock& branch(int i) const { return i == 0 ? a1_ : a2_; }
  const CnnBlock& decompose(int i) const { return i == 0 ? b1_ : b2_; }
  const SpatialFusion& fusion() const { return fusion_; }

 private:
  std::size_t in_ = 0, out_ = 0, stride_ = 1;
  CnnBlock a1_, a2_;
  SpatialFusion fusion_;
  CnnBlock b1_, b2_;
  std::optional<ConvLayer> proj1_, proj2_;
};

/// Trainable scalars referenced by the given store indices.
std::uint64_t count_params(const ParamStore& store, const std::vector<std::size_t>& indices);

template <class Component>
std::uint64_t count_params(const ParamStore& store, const Component& c) {
  return count_params(store, c.param_indices());
}

template <class Component>
std::uint64_t count_flops(const Component& c, const Shape& input_shape) {
  return c.flops(input_shape);
}

}  // namespace icnn
