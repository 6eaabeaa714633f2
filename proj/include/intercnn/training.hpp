#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "intercnn/data.hpp"
#include "intercnn/model.hpp"

namespace icnn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moments for every trainable store entry (empty tensors elsewhere).
struct AdamState {
  AdamConfig cfg;
  std::uint64_t step = 0;
  std::vector<Tensor> m, v;

  static AdamState init(const ParamStore& params, const AdamConfig& cfg = {});
};

/// grads[i] is the gradient of store entry i; entries without gradient may be
/// empty. Throws Training naming the parameter on a non-finite gradient.
void adam_step(ParamStore& params, std::span<const Tensor> grads, AdamState& state);

/// One coin per window: with probability p both front tensors become zero.
SampleWindow apply_stream_dropout(const SampleWindow& window, double p, std::uint64_t seed);
bool stream_dropout_coin(double p, std::uint64_t seed);
/// Applies an independent coin (seeded by mix_seed(seed, i)) to window i.
void apply_stream_dropout(WindowBatch& batch, double p, std::uint64_t seed);

/// Label id used for training a model with the given class count.
int target_label(int behavior_id, std::size_t classes);

/// Windows of a split, addressed by reference into their clips.
struct WindowSet {
  std::span<const PreparedClip> clips;
  std::vector<WindowRef> refs;

  std::size_t size() const { return refs.size(); }
};

WindowSet make_window_set(std::span<const PreparedClip> clips, std::size_t stride);
/// Stacks the selected windows; labels are mapped to the model's class count.
WindowBatch gather_batch(const WindowSet& set, std::span<const std::size_t> indices, std::size_t classes,
                         DType dtype = DType::f32);

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t max_epochs = 50;
  std::size_t max_steps = 0;    // 0 = no limit
  std::size_t eval_period = 0;  // optimizer steps between validations; 0 = once per epoch
  std::size_t patience = 10;
  double min_delta = 0.0;  // validation loss must drop by more than this to count as improvement
  double lr = 1e-4;
  double stream_dropout_p = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct StepOptions {
  double dropout_p = 0.0;
  std::uint64_t dropout_seed = 0;
  bool update_running_stats = true;
};

/// Train-mode forward, cross-entropy, backward and one Adam update; returns
/// the loss before the update. When correct is set it receives the number of
/// argmax hits in the batch.
double train_step(Model& model, const WindowBatch& batch, AdamState& adam, const StepOptions& opts = {},
                  std::size_t* correct = nullptr);

struct LossAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t windows = 0;
};

/// Eval-mode mean cross-entropy and accuracy over a window set.
LossAccuracy evaluate_loss(const Model& model, const WindowSet& set, std::size_t batch_size = 16);

struct HistoryRow {
  std::size_t step = 0;
  std::string split;  // "train" or "validation"
  double loss = 0.0;
  double accuracy = 0.0;
};

/// "step, split, loss, accuracy"
std::string format_history_row(const HistoryRow& row);

struct FitResult {
  std::vector<HistoryRow> history;
  double best_validation_loss = 0.0;
  std::size_t best_step = 0;
  std::size_t steps = 0;
  std::size_t evaluations = 0;
  bool stopped_early = false;
};

using HistorySink = std::function<void(const HistoryRow&)>;

/// Adam with validation-based early stopping. On return the model holds the
/// parameters of the best validation evaluation. With lr = 0 the BN running
/// statistics are frozen too, so the model does not change at all.
FitResult fit(Model& model, const WindowSet& train, const WindowSet& validation, const TrainConfig& cfg,
              const HistorySink& sink = {});

}  // namespace icnn
