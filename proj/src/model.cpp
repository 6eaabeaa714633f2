#include "intercnn/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "intercnn/container.hpp"
#include "config_json.hpp"

namespace icnn {

using detail::json;

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::PlainCNN: return "plain";
    case ModelKind::TSCNN: return "tscnn";
    case ModelKind::InterCNN: return "intercnn";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "plain") return ModelKind::PlainCNN;
  if (s == "tscnn") return ModelKind::TSCNN;
  if (s == "intercnn") return ModelKind::InterCNN;
  fail(ErrorKind::Config, "unknown model kind '" + s + "' (expected plain|tscnn|intercnn)");
}

void ModelConfig::validate() const {
  block.validate();
  if (stack_depth < 1 || interweave_depth < 1) fail(ErrorKind::Config, "network depths must be >= 1");
  if (downsample_every < 1) fail(ErrorKind::Config, "downsample_every must be >= 1");
  if (base_width < 1 || max_width_mult < 2) fail(ErrorKind::Config, "base_width must be >= 1 and max_width_mult >= 2");
  if (height < 1 || width < 1) fail(ErrorKind::Config, "input dims must be positive");
  if (frames < 1 || flows < 1) fail(ErrorKind::Config, "window depths must be positive");
  if (classes != 9 && classes != 5) fail(ErrorKind::Config, "class count must be 9 or 5");
  const bool side = streams.side_frames, side_of = streams.side_flows;
  const bool front = streams.front_frames, front_of = streams.front_flows;
  switch (kind) {
    case ModelKind::InterCNN:
      if (!(side && side_of && front && front_of))
        fail(ErrorKind::Config, "InterCNN needs side and front views with their flows");
      break;
    case ModelKind::TSCNN:
      if (!(side && side_of)) fail(ErrorKind::Config, "two-stream CNN needs the side view and side flow");
      break;
    case ModelKind::PlainCNN:
      if (!side) fail(ErrorKind::Config, "plain CNN needs the side view");
      break;
  }
}

namespace {

std::size_t scaled(std::size_t v, double mult) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(v) * mult)));
}

double resolution_mult(const BlockKind& b) { return b.variant == BlockVariant::MobileNet ? b.resolution_mult : 1.0; }
double width_mult(const BlockKind& b) { return b.variant == BlockVariant::MobileNet ? b.width_mult : 1.0; }

json block_to_json(const BlockKind& b) {
  return json{{"variant", block_variant_name(b.variant)},
              {"width_mult", b.width_mult},
              {"resolution_mult", b.resolution_mult},
              {"expansion", b.expansion}};
}

BlockKind block_from_json(const json& j) {
  detail::require_keys(j, {"variant", "width_mult", "resolution_mult", "expansion"}, "block");
  BlockKind b;
  std::string v = block_variant_name(b.variant);
  detail::read_opt(j, "variant", v, "block");
  b.variant = parse_block_variant(v);
  detail::read_opt(j, "width_mult", b.width_mult, "block");
  detail::read_opt(j, "resolution_mult", b.resolution_mult, "block");
  detail::read_opt(j, "expansion", b.expansion, "block");
  return b;
}

}  // namespace

std::size_t ModelConfig::input_height() const { return scaled(height, resolution_mult(block)); }
std::size_t ModelConfig::input_width() const { return scaled(width, resolution_mult(block)); }

std::string model_config_to_json(const ModelConfig& c) {
  json j{{"kind", model_kind_name(c.kind)},
         {"block", block_to_json(c.block)},
         {"stack_depth", c.stack_depth},
         {"interweave_depth", c.interweave_depth},
         {"downsample_every", c.downsample_every},
         {"base_width", c.base_width},
         {"max_width_mult", c.max_width_mult},
         {"height", c.height},
         {"width", c.width},
         {"frames", c.frames},
         {"flows", c.flows},
         {"classes", c.classes},
         {"streams",
          {{"side_frames", c.streams.side_frames},
           {"side_flows", c.streams.side_flows},
           {"front_frames", c.streams.front_frames},
           {"front_flows", c.streams.front_flows}}}};
  return j.dump(2);
}

namespace detail {

void apply_model_json(ModelConfig& c, const json& j) {
  require_keys(j,
               {"kind", "block", "stack_depth", "interweave_depth", "downsample_every", "base_width", "max_width_mult",
                "height", "width", "frames", "flows", "classes", "streams"},
               "model");
  if (j.contains("kind")) c.kind = parse_model_kind(j.at("kind").get<std::string>());
  if (j.contains("block")) c.block = block_from_json(j.at("block"));
  read_opt(j, "stack_depth", c.stack_depth, "model");
  read_opt(j, "interweave_depth", c.interweave_depth, "model");
  read_opt(j, "downsample_every", c.downsample_every, "model");
  read_opt(j, "base_width", c.base_width, "model");
  read_opt(j, "max_width_mult", c.max_width_mult, "model");
  read_opt(j, "height", c.height, "model");
  read_opt(j, "width", c.width, "model");
  read_opt(j, "frames", c.frames, "model");
  read_opt(j, "flows", c.flows, "model");
  read_opt(j, "classes", c.classes, "model");
  if (j.contains("streams")) {
    const json& s = j.at("streams");
    require_keys(s, {"side_frames", "side_flows", "front_frames", "front_flows"}, "model.streams");
    read_opt(s, "side_frames", c.streams.side_frames, "model.streams");
    read_opt(s, "side_flows", c.streams.side_flows, "model.streams");
    read_opt(s, "front_frames", c.streams.front_frames, "model.streams");
    read_opt(s, "front_flows", c.streams.front_flows, "model.streams");
  }
}

}  // namespace detail

ModelConfig model_config_from_json(const std::string& text) {
  ModelConfig c;
  detail::apply_model_json(c, detail::parse_json(text, "model descriptor"));
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

DenseLayer DenseLayer::create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                              std::uint64_t seed) {
  DenseLayer d;
  d.in = in;
  d.out = out;
  d.weights = store.add(prefix + "/weights", init_tensor({in, out}, InitScheme::LecunNormal, in, seed));
  d.bias = store.add(prefix + "/bias", Tensor::zeros({out}));
  return d;
}

Var DenseLayer::forward(const ForwardContext& ctx, Var x) const {
  return ad::dense(x, ctx.param(weights), ctx.param(bias));
}

// ---------------------------------------------------------------------------

Model Model::build(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;
  ParamStore& store = m.store_;
  const std::size_t base = cfg.base_width;

  auto add_stream = [&](const std::string& name, Tensor WindowBatch::*input, std::size_t depth,
                        std::size_t channels) {
    Stream s{name, input, depth, channels, {}};
    for (std::size_t i = 0; i < cfg.stack_depth; ++i)
      s.blocks.push_back(Cnn3dBlock::create(store, name + "/block" + std::to_string(i), i == 0 ? channels : base, base,
                                            mix_seed(seed, 1000 * (m.streams_.size() + 1) + i)));
    m.streams_.push_back(std::move(s));
  };
  add_stream("side_spatial", &WindowBatch::side_frames, cfg.frames, 3);
  if (cfg.kind != ModelKind::PlainCNN) add_stream("side_temporal", &WindowBatch::side_flows, cfg.flows, 2);
  if (cfg.kind == ModelKind::InterCNN) {
    add_stream("front_spatial", &WindowBatch::front_frames, cfg.frames, 3);
    add_stream("front_temporal", &WindowBatch::front_flows, cfg.flows, 2);
  }

  const double alpha = width_mult(cfg.block);
  std::size_t width = scaled(2 * base, alpha);
  const std::size_t cap = scaled(cfg.max_width_mult * base, alpha);
  const std::size_t folded_side = cfg.kind == ModelKind::PlainCNN ? cfg.frames * base : (cfg.frames + cfg.flows) * base;
  m.projections_.push_back(Stage::create(store, "side/fusion", ConvType::Standard2d, folded_side, width, 1, 1,
                                         Activation::Selu, mix_seed(seed, 50)));
  if (cfg.kind == ModelKind::InterCNN)
    m.projections_.push_back(Stage::create(store, "front/fusion", ConvType::Standard2d,
                                           (cfg.frames + cfg.flows) * base, width, 1, 1, Activation::Selu,
                                           mix_seed(seed, 51)));

  for (std::size_t i = 1; i <= cfg.interweave_depth; ++i) {
    const bool down = i % cfg.downsample_every == 0;
    const std::size_t stride = down ? 2 : 1;
    const std::size_t out = down ? std::min(2 * width, std::max(cap, width)) : width;
    const std::uint64_t s = mix_seed(seed, 5000 + i);
    if (cfg.kind == ModelKind::InterCNN)
      m.modules_.push_back(
          InterweavingModule::create(store, "interweave" + std::to_string(i), cfg.block, width, out, stride, s));
    else
      m.blocks_.push_back(CnnBlock::create(store, "block" + std::to_string(i), cfg.block, width, out, stride, s));
    width = out;
  }
  const std::size_t features = cfg.kind == ModelKind::InterCNN ? 2 * width : width;
  m.hidden_ = DenseLayer::create(store, "head/hidden", features, 4 * cfg.classes, mix_seed(seed, 90));
  m.output_ = DenseLayer::create(store, "head/logits", 4 * cfg.classes, cfg.classes, mix_seed(seed, 91));
  return m;
}

Shape Model::window_shape(const Stream& s) const {
  return {s.depth, cfg_.input_height(), cfg_.input_width(), s.channels};
}

void Model::check_batch(const WindowBatch& batch) const {
  const std::size_t n = batch.size();
  if (n == 0) fail(ErrorKind::Shape, "empty batch");
  for (const Stream& s : streams_) {
    const Tensor& t = batch.*(s.input);
    Shape want{n};
    const Shape ws = window_shape(s);
    want.insert(want.end(), ws.begin(), ws.end());
    if (t.shape() != want)
      fail(ErrorKind::Shape, s.name + " input must be " + shape_str(want) + ", got " + shape_str(t.shape()));
  }
}

Var Model::run_stream(const ForwardContext& ctx, const Stream& s, const WindowBatch& batch) const {
  const Tensor& in = batch.*(s.input);
  Var x = ctx.tape.leaf(in.dtype() == dtype() ? in : in.cast(dtype()));
  for (std::size_t i = 0; i < s.blocks.size(); ++i) {
    x = s.blocks[i].forward(ctx, x);
    ctx.emit(s.name + "/block" + std::to_string(i), x);
  }
  return x;
}

Var Model::forward(const ForwardContext& ctx, const WindowBatch& batch) const {
  check_batch(batch);
  std::vector<Var> outs;
  for (const Stream& s : streams_) outs.push_back(run_stream(ctx, s, batch));

  std::vector<Var> fused;
  if (cfg_.kind == ModelKind::PlainCNN) {
    fused.push_back(ad::fold_time(outs[0]));
  } else {
    fused.push_back(ad::temporal_fuse(outs[0], outs[1]));
    if (cfg_.kind == ModelKind::InterCNN) fused.push_back(ad::temporal_fuse(outs[2], outs[3]));
  }
  static const char* group[] = {"side", "front"};
  for (std::size_t g = 0; g < fused.size(); ++g) {
    ctx.emit(std::string(group[g]) + "/temporal_fusion", fused[g]);
    fused[g] = projections_[g].forward(ctx, fused[g]);
    ctx.emit(std::string(group[g]) + "/fused", fused[g]);
  }

  Var x;
  if (cfg_.kind == ModelKind::InterCNN) {
    Var a = fused[0], b = fused[1];
    for (std::size_t i = 0; i < modules_.size(); ++i) {
      std::tie(a, b) = modules_[i].forward(ctx, a, b);
      ctx.emit("interweave" + std::to_string(i + 1) + "/stream1", a);
      ctx.emit("interweave" + std::to_string(i + 1) + "/stream2", b);
    }
    x = ad::concat_channels(a, b);
  } else {
    x = fused[0];
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      x = blocks_[i].forward(ctx, x);
      ctx.emit("block" + std::to_string(i + 1), x);
    }
  }
  x = ad::global_avg_pool(x);
  ctx.emit("pooled", x);
  x = ad::activation(hidden_.forward(ctx, x), Activation::Selu);
  ctx.emit("hidden", x);
  x = output_.forward(ctx, x);
  ctx.emit("logits", x);
  return x;
}

Tensor Model::logits(const WindowBatch& batch, const ActivationSink* sink) const {
  Tape tape;
  const std::vector<Var> vars = bind_params(tape, store_, false);
  ForwardContext ctx{tape, vars, Mode::Eval, nullptr, sink};
  return forward(ctx, batch).value();
}

Model Model::cast(DType dtype) const {
  Model m = *this;
  m.store_ = store_.cast(dtype);
  return m;
}

std::uint64_t Model::flop_count() const {
  std::vector<Shape> outs;
  std::uint64_t total = 0;
  for (const Stream& s : streams_) {
    Shape shape{1};
    const Shape ws = window_shape(s);
    shape.insert(shape.end(), ws.begin(), ws.end());
    for (const Cnn3dBlock& b : s.blocks) {
      total += b.flops(shape);
      shape = b.output_shape(shape);
    }
    outs.push_back(shape);
  }
  const Shape& o = outs[0];
  std::size_t folded = o[1] * o[4];
  if (cfg_.kind != ModelKind::PlainCNN) folded += outs[1][1] * outs[1][4];
  Shape shape{1, o[2], o[3], folded};
  for (const Stage& p : projections_) total += p.flops(shape);
  shape = projections_[0].output_shape(shape);
  if (cfg_.kind == ModelKind::InterCNN) {
    for (const InterweavingModule& m : modules_) {
      total += m.flops(shape);
      shape = m.output_shape(shape);
    }
    shape.back() *= 2;
  } else {
    for (const CnnBlock& b : blocks_) {
      total += b.flops(shape);
      shape = b.output_shape(shape);
    }
  }
  total += shape_numel(shape);  // global average pool
  total += hidden_.flops() + hidden_.out + output_.flops();
  return total;
}

std::vector<std::pair<std::string, Shape>> Model::activation_shapes() const {
  WindowBatch probe;
  const std::size_t h = cfg_.input_height(), w = cfg_.input_width();
  const DType dt = dtype();
  probe.side_frames = Tensor({1, cfg_.frames, h, w, 3}, dt);
  probe.side_flows = Tensor({1, cfg_.flows, h, w, 2}, dt);
  probe.front_frames = Tensor({1, cfg_.frames, h, w, 3}, dt);
  probe.front_flows = Tensor({1, cfg_.flows, h, w, 2}, dt);
  probe.labels = {0};
  std::vector<std::pair<std::string, Shape>> shapes;
  ActivationSink sink = [&](const std::string& tag, const Tensor& v) { shapes.emplace_back(tag, v.shape()); };
  logits(probe, &sink);
  return shapes;
}

std::filesystem::path descriptor_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".json");
}

void Model::save(const std::filesystem::path& path) const {
  TensorMap entries;
  for (std::size_t i = 0; i < store_.size(); ++i) entries.emplace(store_.name(i), store_.value(i));
  write_container(entries, path);
  json desc{{"format", "intercnn-checkpoint"}, {"version", 1},
            {"model", json::parse(model_config_to_json(cfg_))}};
  std::ofstream out(descriptor_path(path), std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + descriptor_path(path).string());
  out << desc.dump(2) << '\n';
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(descriptor_path(path));
  if (!in) fail(ErrorKind::Io, "missing checkpoint descriptor " + descriptor_path(path).string());
  std::stringstream text;
  text << in.rdbuf();
  const json desc = detail::parse_json(text.str(), "checkpoint descriptor");
  detail::require_keys(desc, {"format", "version", "model"}, "checkpoint descriptor");
  if (desc.value("format", "") != "intercnn-checkpoint" || desc.value("version", 0) != 1)
    fail(ErrorKind::Config, "unrecognized checkpoint descriptor in " + descriptor_path(path).string());
  ModelConfig cfg;
  detail::apply_model_json(cfg, desc.at("model"));
  Model m = build(cfg, 0);
  TensorMap entries = read_container(path);
  if (entries.size() != m.store_.size())
    fail(ErrorKind::Config, "checkpoint holds " + std::to_string(entries.size()) + " tensors but the descriptor needs " +
                                std::to_string(m.store_.size()));
  for (std::size_t i = 0; i < m.store_.size(); ++i) {
    auto it = entries.find(m.store_.name(i));
    if (it == entries.end()) fail(ErrorKind::Config, "checkpoint is missing tensor '" + m.store_.name(i) + "'");
    if (it->second.shape() != m.store_.value(i).shape())
      fail(ErrorKind::Config, "checkpoint tensor '" + it->first + "' has shape " + shape_str(it->second.shape()) +
                                  ", descriptor expects " + shape_str(m.store_.value(i).shape()));
    m.store_.value(i) = std::move(it->second);
  }
  return m;
}

}  // namespace icnn
