#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "intercnn/blocks.hpp"
#include "intercnn/window.hpp"

namespace icnn {

enum class ModelKind { PlainCNN, TSCNN, InterCNN };

const char* model_kind_name(ModelKind k);
ModelKind parse_model_kind(const std::string& s);

/// Which of the four input streams a deployment provides.
struct StreamSet {
  bool side_frames = true;
  bool side_flows = true;
  bool front_frames = true;
  bool front_flows = true;
};

struct ModelConfig {
  ModelKind kind = ModelKind::InterCNN;
  BlockKind block = BlockKind::mobilenet();
  std::size_t stack_depth = 7;        // 3D blocks per stream
  std::size_t interweave_depth = 25;  // interweaving modules (or 2D blocks)
  std::size_t downsample_every = 5;   // stride-2 at every n-th module
  std::size_t base_width = 8;
  std::size_t max_width_mult = 16;    // fused width cap, in units of base_width
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t frames = kWindowFrames;
  std::size_t flows = kWindowFlows;
  std::size_t classes = 9;
  StreamSet streams;

  void validate() const;
  /// Per-view input dims after the MobileNet resolution multiplier.
  std::size_t input_height() const;
  std::size_t input_width() const;
};

/// Structured-text (JSON) architecture descriptor; unknown keys are rejected.
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

struct DenseLayer {
  std::size_t weights = 0, bias = 0;
  std::size_t in = 0, out = 0;

  static DenseLayer create(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                           std::uint64_t seed);
  Var forward(const ForwardContext& ctx, Var x) const;
  std::uint64_t flops() const { return 2 * in * out + out; }
  std::vector<std::size_t> param_indices() const { return {weights, bias}; }
};

/// One of the three network shapes: plain CNN, two-stream CNN, InterCNN.
class Model {
 public:
  static Model build(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const ParamStore& params() const { return store_; }
  ParamStore& params() { return store_; }
  DType dtype() const { return store_.value(0).dtype(); }

  /// Records the forward pass on ctx.tape and returns [N, classes] logits.
  Var forward(const ForwardContext& ctx, const WindowBatch& batch) const;

  /// Eval-mode logits without gradient tracking.
  Tensor logits(const WindowBatch& batch, const ActivationSink* sink = nullptr) const;

  /// Copy of the model with every tensor cast to dtype.
  Model cast(DType dtype) const;

  std::uint64_t param_count() const { return store_.trainable_count(); }
  /// Forward FLOPs for a single window (eval-mode convention).
  std::uint64_t flop_count() const;

  /// Tags accepted by activation export, with their shapes for one window.
  std::vector<std::pair<std::string, Shape>> activation_shapes() const;

  void save(const std::filesystem::path& path) const;
  /// Throws Config when the stored descriptor does not match the tensors.
  static Model load(const std::filesystem::path& path);

 private:
  struct Stream {
    std::string name;
    Tensor WindowBatch::*input = nullptr;
    std::size_t depth = 0, channels = 0;
    std::vector<Cnn3dBlock> blocks;
  };

  Var run_stream(const ForwardContext& ctx, const Stream& s, const WindowBatch& batch) const;
  Shape window_shape(const Stream& s) const;
  void check_batch(const WindowBatch& batch) const;

  ModelConfig cfg_;
  ParamStore store_;
  std::vector<Stream> streams_;
  std::vector<Stage> projections_;  // one per fused stream
  std::vector<InterweavingModule> modules_;
  std::vector<CnnBlock> blocks_;
  DenseLayer hidden_, output_;
};

/// Sidecar descriptor path for a checkpoint file.
std::filesystem::path descriptor_path(const std::filesystem::path& checkpoint);

}  // namespace icnn
