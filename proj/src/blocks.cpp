#include "intercnn/blocks.hpp"

#include <cmath>

namespace icnn {

void BlockKind::validate() const {
  if (!(width_mult > 0.0)) fail(ErrorKind::Config, "MobileNet width multiplier must be > 0");
  if (!(resolution_mult > 0.0)) fail(ErrorKind::Config, "MobileNet resolution multiplier must be > 0");
  if (expansion < 1) fail(ErrorKind::Config, "MobileNetV2 expansion factor must be >= 1");
}

const char* block_variant_name(BlockVariant v) {
  switch (v) {
    case BlockVariant::Vanilla: return "vanilla";
    case BlockVariant::MobileNet: return "mobilenet";
    case BlockVariant::MobileNetV2: return "mobilenet_v2";
  }
  return "?";
}

BlockVariant parse_block_variant(const std::string& s) {
  if (s == "vanilla") return BlockVariant::Vanilla;
  if (s == "mobilenet") return BlockVariant::MobileNet;
  if (s == "mobilenet_v2") return BlockVariant::MobileNetV2;
  fail(ErrorKind::Config, "unknown block kind '" + s + "' (expected vanilla|mobilenet|mobilenet_v2)");
}

std::uint64_t conv_flops(std::uint64_t out_positions, std::uint64_t taps, std::uint64_t in_channels,
                         std::uint64_t out_channels, bool bias) {
  return 2 * out_positions * taps * in_channels * out_channels + (bias ? out_positions * out_channels : 0);
}

std::uint64_t count_params(const ParamStore& store, const std::vector<std::size_t>& indices) {
  std::uint64_t n = 0;
  for (std::size_t i : indices)
    if (store.trainable(i)) n += store.value(i).numel();
  return n;
}

namespace {

template <class... Lists>
std::vector<std::size_t> join(const Lists&... lists) {
  std::vector<std::size_t> out;
  (out.insert(out.end(), lists.begin(), lists.end()), ...);
  return out;
}

std::uint64_t elements(const Shape& s) { return shape_numel(s); }

}  // namespace

// ---------------------------------------------------------------------------

ConvLayer ConvLayer::create(ParamStore& store, const std::string& prefix, ConvType type, std::size_t in,
                            std::size_t out, std::size_t extent, std::size_t stride, InitScheme init,
                            std::uint64_t seed) {
  ConvLayer c;
  c.type = type;
  c.in_channels = in;
  c.out_channels = type == ConvType::Depthwise2d ? in : out;
  c.extent = extent;
  c.stride = stride;
  Shape kshape;
  std::size_t fan_in = 0;
  switch (type) {
    case ConvType::Standard2d:
      kshape = {extent, extent, in, out};
      fan_in = extent * extent * in;
      break;
    case ConvType::Depthwise2d:
      kshape = {extent, extent, in};
      fan_in = extent * extent;
      break;
    case ConvType::Standard3d:
      kshape = {extent, extent, extent, in, out};
      fan_in = extent * extent * extent * in;
      break;
  }
  c.kernel = store.add(prefix + "/kernel", init_tensor(kshape, init, fan_in, seed));
  c.bias = store.add(prefix + "/bias", Tensor::zeros({c.out_channels}));
  return c;
}

Var ConvLayer::forward(const ForwardContext& ctx, Var x) const {
  const Var k = ctx.param(kernel), b = ctx.param(bias);
  switch (type) {
    case ConvType::Standard2d: return ad::conv2d(x, k, b, {stride, stride}, Padding::Same);
    case ConvType::Depthwise2d: return ad::depthwise_conv2d(x, k, b, {stride, stride}, Padding::Same);
    case ConvType::Standard3d: return ad::conv3d(x, k, b, {1, stride, stride}, Padding::Same);
  }
  return x;
}

Shape ConvLayer::output_shape(const Shape& in) const {
  Shape s = in;
  const std::size_t r = s.size();
  if (r < 4) fail(ErrorKind::Shape, "convolution input must be rank 4 or 5, got " + shape_str(in));
  if (s.back() != in_channels)
    fail(ErrorKind::Shape, "convolution expects " + std::to_string(in_channels) + " input channels, got " +
                               shape_str(in));
  s[r - 3] = ops::conv_out_dim(s[r - 3], extent, stride, Padding::Same);
  s[r - 2] = ops::conv_out_dim(s[r - 2], extent, stride, Padding::Same);
  s[r - 1] = out_channels;
  return s;
}

std::uint64_t ConvLayer::flops(const Shape& in) const {
  const Shape out = output_shape(in);
  const std::uint64_t positions = elements(out) / out_channels;
  switch (type) {
    case ConvType::Standard2d: return conv_flops(positions, extent * extent, in_channels, out_channels);
    case ConvType::Depthwise2d: return conv_flops(positions, extent * extent, 1, out_channels);
    case ConvType::Standard3d: return conv_flops(positions, extent * extent * extent, in_channels, out_channels);
  }
  return 0;
}

// ---------------------------------------------------------------------------

NormLayer NormLayer::create(ParamStore& store, const std::string& prefix, std::size_t channels) {
  NormLayer n;
  n.gamma = store.add(prefix + "/gamma", Tensor::full({channels}, 1.0));
  n.beta = store.add(prefix + "/beta", Tensor::zeros({channels}));
  n.mean = store.add(prefix + "/running_mean", Tensor::zeros({channels}), false);
  n.var = store.add(prefix + "/running_var", Tensor::full({channels}, 1.0), false);
  return n;
}

Var NormLayer::forward(const ForwardContext& ctx, Var x) const {
  if (ctx.mode == Mode::Train && ctx.running) {
    return ad::batch_norm(x, ctx.param(gamma), ctx.param(beta), ctx.running->value(mean), ctx.running->value(var),
                          kBnMomentum, kBnEpsilon, Mode::Train, true);
  }
  Tensor rm = ctx.param(mean).value();
  Tensor rv = ctx.param(var).value();
  return ad::batch_norm(x, ctx.param(gamma), ctx.param(beta), rm, rv, kBnMomentum, kBnEpsilon, ctx.mode, false);
}

std::uint64_t NormLayer::flops(const Shape& in) const { return 2 * elements(in); }

// ---------------------------------------------------------------------------

Stage Stage::create(ParamStore& store, const std::string& prefix, ConvType type, std::size_t in, std::size_t out,
                    std::size_t extent, std::size_t stride, Activation act, std::uint64_t seed) {
  Stage s;
  const InitScheme init = act == Activation::Relu ? InitScheme::HeNormal : InitScheme::LecunNormal;
  s.conv = ConvLayer::create(store, prefix + "/conv", type, in, out, extent, stride, init, seed);
  s.norm = NormLayer::create(store, prefix + "/bn", s.conv.out_channels);
  s.act = act;
  return s;
}

Var Stage::forward(const ForwardContext& ctx, Var x) const {
  return ad::activation(norm.forward(ctx, conv.forward(ctx, x)), act);
}

std::uint64_t Stage::flops(const Shape& in) const {
  const Shape out = output_shape(in);
  return conv.flops(in) + norm.flops(out) + (act == Activation::None ? 0 : elements(out));
}

std::vector<std::size_t> Stage::param_indices() const { return join(conv.param_indices(), norm.param_indices()); }

// ---------------------------------------------------------------------------

CnnBlock CnnBlock::create(ParamStore& store, const std::string& prefix, const BlockKind& kind, std::size_t in,
                          std::size_t out, std::size_t stride, std::uint64_t seed) {
  kind.validate();
  if (in == 0 || out == 0 || stride == 0) fail(ErrorKind::Config, "block channels and stride must be positive");
  CnnBlock b;
  b.kind_ = kind;
  b.in_ = in;
  b.out_ = out;
  b.stride_ = stride;
  switch (kind.variant) {
    case BlockVariant::Vanilla:
      b.stages_.push_back(Stage::create(store, prefix + "/conv", ConvType::Standard2d, in, out, kKernel2d, stride,
                                        Activation::Relu, mix_seed(seed, 0)));
      break;
    case BlockVariant::MobileNet:
      b.stages_.push_back(Stage::create(store, prefix + "/depthwise", ConvType::Depthwise2d, in, in, kKernel2d,
                                        stride, Activation::Relu, mix_seed(seed, 0)));
      b.stages_.push_back(Stage::create(store, prefix + "/pointwise", ConvType::Standard2d, in, out, 1, 1,
                                        Activation::Relu, mix_seed(seed, 1)));
      break;
    case BlockVariant::MobileNetV2: {
      const std::size_t hidden = in * kind.expansion;
      b.stages_.push_back(Stage::create(store, prefix + "/expand", ConvType::Standard2d, in, hidden, 1, 1,
                                        Activation::Relu, mix_seed(seed, 0)));
      b.stages_.push_back(Stage::create(store, prefix + "/depthwise", ConvType::Depthwise2d, hidden, hidden,
                                        kKernel2d, stride, Activation::Relu, mix_seed(seed, 1)));
      b.stages_.push_back(Stage::create(store, prefix + "/project", ConvType::Standard2d, hidden, out, 1, 1,
                                        Activation::None, mix_seed(seed, 2)));
      b.skip_ = stride == 1 && in == out;
      break;
    }
  }
  return b;
}

Var CnnBlock::forward(const ForwardContext& ctx, Var x) const {
  if (x.value().rank() != 4 || x.value().dim(3) != in_)
    fail(ErrorKind::Shape, "block expects [N,H,W," + std::to_string(in_) + "] input, got " + shape_str(x.shape()));
  Var y = x;
  for (const Stage& s : stages_) y = s.forward(ctx, y);
  if (skip_) y = ad::add(x, y);
  return y;
}

Shape CnnBlock::output_shape(const Shape& in) const {
  Shape s = in;
  for (const Stage& st : stages_) s = st.output_shape(s);
  return s;
}

std::uint64_t CnnBlock::flops(const Shape& in) const {
  std::uint64_t total = 0;
  Shape s = in;
  for (const Stage& st : stages_) {
    total += st.flops(s);
    s = st.output_shape(s);
  }
  if (skip_) total += elements(s);
  return total;
}

std::vector<std::size_t> CnnBlock::param_indices() const {
  std::vector<std::size_t> out;
  for (const Stage& s : stages_) {
    auto p = s.param_indices();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

// ---------------------------------------------------------------------------

Cnn3dBlock Cnn3dBlock::create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                              std::uint64_t seed) {
  Cnn3dBlock b;
  b.stage_ = Stage::create(store, prefix, ConvType::Standard3d, in, out, kKernel3d, 1, Activation::Selu, seed);
  return b;
}

// ---------------------------------------------------------------------------

SpatialFusion SpatialFusion::create(ParamStore& store, const std::string& prefix, std::size_t channels,
                                    std::size_t stride, std::uint64_t seed) {
  SpatialFusion f;
  f.conv_ = ConvLayer::create(store, prefix + "/fuse", ConvType::Standard2d, 2 * channels, 2 * channels, 1, stride,
                              InitScheme::LecunNormal, seed);
  return f;
}

Var SpatialFusion::forward(const ForwardContext& ctx, Var a, Var b) const {
  if (a.shape() != b.shape())
    fail(ErrorKind::Shape, "spatial fusion inputs differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  return conv_.forward(ctx, ad::concat_channels(a, b));
}

Shape SpatialFusion::output_shape(const Shape& in) const {
  Shape cat = in;
  cat.back() *= 2;
  return conv_.output_shape(cat);
}

std::uint64_t SpatialFusion::flops(const Shape& in) const {
  Shape cat = in;
  cat.back() *= 2;
  return conv_.flops(cat);
}

// ---------------------------------------------------------------------------

InterweavingModule InterweavingModule::create(ParamStore& store, const std::string& prefix, const BlockKind& kind,
                                              std::size_t in_channels, std::size_t out_channels, std::size_t stride,
                                              std::uint64_t seed) {
  InterweavingModule m;
  m.in_ = in_channels;
  m.out_ = out_channels;
  m.stride_ = stride;
  m.a1_ = CnnBlock::create(store, prefix + "/a1", kind, in_channels, in_channels, 1, mix_seed(seed, 1));
  m.a2_ = CnnBlock::create(store, prefix + "/a2", kind, in_channels, in_channels, 1, mix_seed(seed, 2));
  m.fusion_ = SpatialFusion::create(store, prefix, in_channels, stride, mix_seed(seed, 3));
  m.b1_ = CnnBlock::create(store, prefix + "/b1", kind, 2 * in_channels, out_channels, 1, mix_seed(seed, 4));
  m.b2_ = CnnBlock::create(store, prefix + "/b2", kind, 2 * in_channels, out_channels, 1, mix_seed(seed, 5));
  if (stride != 1 || in_channels != out_channels) {
    m.proj1_ = ConvLayer::create(store, prefix + "/skip1", ConvType::Standard2d, in_channels, out_channels, 1, stride,
                                 InitScheme::LecunNormal, mix_seed(seed, 6));
    m.proj2_ = ConvLayer::create(store, prefix + "/skip2", ConvType::Standard2d, in_channels, out_channels, 1, stride,
                                 InitScheme::LecunNormal, mix_seed(seed, 7));
  }
  return m;
}

std::pair<Var, Var> InterweavingModule::forward(const ForwardContext& ctx, Var x1, Var x2) const {
  if (x1.shape() != x2.shape())
    fail(ErrorKind::Shape, "interweaving inputs differ: " + shape_str(x1.shape()) + " vs " + shape_str(x2.shape()));
  const Var fused = fusion_.forward(ctx, a1_.forward(ctx, x1), a2_.forward(ctx, x2));
  const Var r1 = proj1_ ? proj1_->forward(ctx, x1) : x1;
  const Var r2 = proj2_ ? proj2_->forward(ctx, x2) : x2;
  return {ad::add(r1, b1_.forward(ctx, fused)), ad::add(r2, b2_.forward(ctx, fused))};
}

Shape InterweavingModule::output_shape(const Shape& in) const {
  return b1_.output_shape(fusion_.output_shape(a1_.output_shape(in)));
}

std::uint64_t InterweavingModule::flops(const Shape& in) const {
  const Shape branch = a1_.output_shape(in);
  const Shape fused = fusion_.output_shape(branch);
  const Shape out = b1_.output_shape(fused);
  std::uint64_t total = a1_.flops(in) + a2_.flops(in) + fusion_.flops(branch) + b1_.flops(fused) + b2_.flops(fused);
  if (proj1_) total += proj1_->flops(in) + proj2_->flops(in);
  return total + 2 * elements(out);
}

std::vector<std::size_t> InterweavingModule::param_indices() const {
  std::vector<std::size_t> out = join(a1_.param_indices(), a2_.param_indices(), fusion_.param_indices(),
                                      b1_.param_indices(), b2_.param_indices());
  if (proj1_) {
    auto p1 = proj1_->param_indices(), p2 = proj2_->param_indices();
    out.insert(out.end(), p1.begin(), p1.end());
    out.insert(out.end(), p2.begin(), p2.end());
  }
  return out;
}

}  // namespace icnn
