#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "intercnn/container.hpp"
#include "intercnn/data.hpp"
#include "intercnn/model.hpp"

namespace icnn {

enum class Occlusion {
  None,
  BlockFront,  // front frames and flows zeroed on every window
  DropFront,   // front stream zeroed per window with probability p
};

const char* occlusion_name(Occlusion o);
Occlusion parse_occlusion(const std::string& s);

enum class LabelSpace { Full9, Aggregated5 };

const char* label_space_name(LabelSpace s);
LabelSpace parse_label_space(const std::string& s);

/// Index of the largest value; ties go to the lowest index.
int argmax_lowest(std::span<const double> values);

struct Prediction {
  int label = 0;
  std::vector<double> logits;
};

/// Eval-mode forward of one window. BlockFront zeroes the front tensors first;
/// DropFront is not meaningful for a single call and raises Config.
Prediction classify_window(const Model& model, const SampleWindow& window, Occlusion occlusion = Occlusion::None);

/// Fixed-capacity FIFO of recent predictions.
class VotePoll {
 public:
  explicit VotePoll(std::size_t capacity = 15);

  /// Pushes label (evicting the oldest when full) and returns the modal label,
  /// ties going to the most recently pushed of the tied labels.
  int push(int label);
  int mode() const;

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return labels_.size(); }
  const std::deque<int>& contents() const { return labels_; }

 private:
  std::size_t capacity_;
  std::deque<int> labels_;
};

int temporal_vote(VotePoll& poll, int new_label);

/// Voting applied to a whole raw stream with a fresh poll.
std::vector<int> vote_stream(std::span<const int> raw, std::size_t n);

struct SlidingOutput {
  int raw = 0;
  int voted = 0;
};

/// Classifies time-ordered windows of one clip and votes over the last n.
std::vector<SlidingOutput> run_sliding(const Model& model, std::span<const SampleWindow> windows, std::size_t n = 15,
                                       Occlusion occlusion = Occlusion::None);

/// Anything that maps a window to a label id in [0, classes).
struct WindowClassifier {
  std::function<int(const SampleWindow&)> classify;
  std::size_t classes = 9;
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

WindowClassifier model_classifier(const Model& model, Occlusion occlusion = Occlusion::None);

struct EvalOptions {
  LabelSpace labels = LabelSpace::Full9;
  Occlusion occlusion = Occlusion::None;
  double drop_p = 0.5;  // DropFront probability
  std::uint64_t seed = 1;
  std::size_t vote_n = 15;
  std::size_t stride = 15;
  std::size_t warmup = 10;
};

struct InferenceStats {
  std::vector<std::vector<std::uint64_t>> confusion_raw;  // [truth][prediction]
  std::vector<std::vector<std::uint64_t>> confusion_voted;
  std::vector<double> latency_ms;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

struct EvalReport {
  std::string model;
  EvalOptions options;
  std::size_t classes = 0;  // size of the evaluated label space
  std::size_t windows = 0;
  double raw_accuracy = 0.0;
  double voted_accuracy = 0.0;
  double latency_p50_ms = 0.0;
  double latency_p95_ms = 0.0;
  InferenceStats stats;
};

/// Nearest-rank percentile (q in [0, 100]) of unsorted samples.
double percentile(std::vector<double> samples, double q);

/// Sliding evaluation per clip (voting restarts at each clip).
EvalReport evaluate(const WindowClassifier& classifier, std::span<const PreparedClip> clips, const EvalOptions& opts);
EvalReport evaluate(const Model& model, std::span<const PreparedClip> clips, const EvalOptions& opts);

/// Report document:
/// {"format":"intercnn-eval-report","version":1,"model":str,"labels":"full9"|"agg5",
///  "occlusion":"none"|"block_front"|"drop_front","vote_n":n,"stride":s,"windows":N,"classes":K,
///  "accuracy":{"raw":x,"voted":y},"confusion":{"raw":[[K×K]],"voted":[[K×K]]},
///  "latency_ms":{"p50":a,"p95":b,"samples":m},"params":P,"flops":F}
/// Confusion rows are true labels, columns predictions.
std::string report_to_json(const EvalReport& report);

struct BenchRow {
  BlockKind block;
  std::size_t channels = 0;     // Cin = Cout of the isolated block
  std::uint64_t block_params = 0;
  std::uint64_t block_flops = 0;  // at the model's input resolution
  std::uint64_t model_params = 0;
  std::uint64_t model_flops = 0;
  double latency_p50_ms = 0.0;
  double latency_p95_ms = 0.0;
};

/// Isolated k=3 block at Cin = Cout = channels plus the full model built from
/// base with its block swapped; latency over `iterations` single-window calls.
BenchRow bench_block(const ModelConfig& base, const BlockKind& block, std::size_t channels, std::size_t iterations,
                     std::size_t warmup, std::uint64_t seed);

/// {"format":"intercnn-bench","version":1,"rows":[{"block","channels","block_params","block_flops",
///  "model_params","model_flops","latency_ms":{"p50","p95"}}]}
std::string bench_to_json(std::span<const BenchRow> rows);

/// Eval-mode activations for the given tags; unknown tags raise Lookup.
TensorMap export_activations(const Model& model, const SampleWindow& window, std::span<const std::string> tags);
void export_activations(const Model& model, const SampleWindow& window, std::span<const std::string> tags,
                        const std::filesystem::path& out);

}  // namespace icnn
