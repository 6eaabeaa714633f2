#include "intercnn/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "intercnn/labels.hpp"
#include "intercnn/training.hpp"
#include "json_util.hpp"

namespace icnn {

using detail::json;

const char* occlusion_name(Occlusion o) {
  switch (o) {
    case Occlusion::None: return "none";
    case Occlusion::BlockFront: return "block_front";
    case Occlusion::DropFront: return "drop_front";
  }
  return "?";
}

Occlusion parse_occlusion(const std::string& s) {
  if (s == "none") return Occlusion::None;
  if (s == "block_front" || s == "front") return Occlusion::BlockFront;
  if (s == "drop_front") return Occlusion::DropFront;
  fail(ErrorKind::Config, "unknown occlusion '" + s + "' (expected none, block_front or drop_front)");
}

const char* label_space_name(LabelSpace s) { return s == LabelSpace::Full9 ? "full9" : "agg5"; }

LabelSpace parse_label_space(const std::string& s) {
  if (s == "full9") return LabelSpace::Full9;
  if (s == "agg5") return LabelSpace::Aggregated5;
  fail(ErrorKind::Config, "unknown label space '" + s + "' (expected full9 or agg5)");
}

int argmax_lowest(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::InvalidInput, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return static_cast<int>(best);
}

Prediction classify_window(const Model& model, const SampleWindow& window, Occlusion occlusion) {
  if (occlusion == Occlusion::DropFront)
    fail(ErrorKind::Config, "drop_front occlusion needs a seed; use apply_stream_dropout");
  const SampleWindow* w = &window;
  SampleWindow blocked;
  if (occlusion == Occlusion::BlockFront) {
    blocked = apply_stream_dropout(window, 1.0, 0);
    w = &blocked;
  }
  const WindowBatch batch = make_batch(std::span<const SampleWindow* const>(&w, 1), model.dtype());
  const Tensor z = model.logits(batch);
  Prediction p;
  p.logits.resize(z.numel());
  for (std::size_t i = 0; i < z.numel(); ++i) p.logits[i] = z.at(i);
  p.label = argmax_lowest(p.logits);
  return p;
}

// ---------------------------------------------------------------------------

VotePoll::VotePoll(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) fail(ErrorKind::Config, "vote poll capacity must be >= 1");
}

int VotePoll::push(int label) {
  if (labels_.size() == capacity_) labels_.pop_front();
  labels_.push_back(label);
  return mode();
}

int VotePoll::mode() const {
  if (labels_.empty()) fail(ErrorKind::Contract, "mode of an empty vote poll");
  std::map<int, std::size_t> counts;
  std::size_t best = 0;
  for (int l : labels_) best = std::max(best, ++counts[l]);
  for (auto it = labels_.rbegin(); it != labels_.rend(); ++it)
    if (counts[*it] == best) return *it;
  return labels_.back();
}

int temporal_vote(VotePoll& poll, int new_label) { return poll.push(new_label); }

std::vector<int> vote_stream(std::span<const int> raw, std::size_t n) {
  VotePoll poll(n);
  std::vector<int> out;
  out.reserve(raw.size());
  for (int l : raw) out.push_back(poll.push(l));
  return out;
}

std::vector<SlidingOutput> run_sliding(const Model& model, std::span<const SampleWindow> windows, std::size_t n,
                                       Occlusion occlusion) {
  VotePoll poll(n);
  std::vector<SlidingOutput> out;
  out.reserve(windows.size());
  for (const SampleWindow& w : windows) {
    const int raw = classify_window(model, w, occlusion).label;
    out.push_back({raw, poll.push(raw)});
  }
  return out;
}

// ---------------------------------------------------------------------------

WindowClassifier model_classifier(const Model& model, Occlusion occlusion) {
  WindowClassifier c;
  c.classify = [&model, occlusion](const SampleWindow& w) { return classify_window(model, w, occlusion).label; };
  c.classes = model.config().classes;
  c.name = model_kind_name(model.config().kind);
  c.params = model.param_count();
  c.flops = model.flop_count();
  return c;
}

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) return 0.0;
  std::sort(samples.begin(), samples.end());
  const double rank = std::ceil(q / 100.0 * static_cast<double>(samples.size()));
  const std::size_t idx = rank < 1.0 ? 0 : static_cast<std::size_t>(rank) - 1;
  return samples[std::min(idx, samples.size() - 1)];
}

EvalReport evaluate(const WindowClassifier& classifier, std::span<const PreparedClip> clips, const EvalOptions& opts) {
  if (!classifier.classify) fail(ErrorKind::Contract, "evaluate: classifier has no function");
  if (classifier.classes != 9 && classifier.classes != 5)
    fail(ErrorKind::Config, "evaluate: classifier must have 9 or 5 classes");
  if (classifier.classes == 5 && opts.labels == LabelSpace::Full9)
    fail(ErrorKind::Config, "a 5-class model cannot be evaluated on the full 9-class label space");
  if (opts.stride == 0) fail(ErrorKind::Config, "evaluation stride must be >= 1");
  std::size_t total = 0;
  for (const PreparedClip& c : clips) total += c.frames() >= kWindowFrames ? window_count(c.frames(), opts.stride) : 0;
  if (total == 0) fail(ErrorKind::Config, "evaluation set has no windows");

  const bool aggregate = opts.labels == LabelSpace::Aggregated5;
  auto to_space = [&](int label, bool is_truth) {
    if (!aggregate) return label;
    if (classifier.classes == 5 && !is_truth) return label;
    return aggregate_label_id(label);
  };

  EvalReport r;
  r.model = classifier.name;
  r.options = opts;
  r.classes = aggregate ? 5 : 9;
  r.stats.confusion_raw.assign(r.classes, std::vector<std::uint64_t>(r.classes, 0));
  r.stats.confusion_voted = r.stats.confusion_raw;
  r.stats.params = classifier.params;
  r.stats.flops = classifier.flops;
  r.stats.latency_ms.reserve(total);

  using Clock = std::chrono::steady_clock;
  bool warmed = false;
  std::size_t raw_ok = 0, voted_ok = 0, index = 0;
  for (const PreparedClip& clip : clips) {
    if (clip.frames() < kWindowFrames) continue;
    VotePoll poll(opts.vote_n);
    const std::size_t count = window_count(clip.frames(), opts.stride);
    for (std::size_t k = 0; k < count; ++k, ++index) {
      SampleWindow w = window_at(clip, k * opts.stride);
      if (opts.occlusion == Occlusion::BlockFront) w = apply_stream_dropout(w, 1.0, 0);
      if (opts.occlusion == Occlusion::DropFront) w = apply_stream_dropout(w, opts.drop_p, mix_seed(opts.seed, index));
      if (!warmed) {
        for (std::size_t i = 0; i < opts.warmup; ++i) (void)classifier.classify(w);
        warmed = true;
      }
      const auto t0 = Clock::now();
      const int raw = classifier.classify(w);
      const auto t1 = Clock::now();
      r.stats.latency_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      if (raw < 0 || static_cast<std::size_t>(raw) >= classifier.classes)
        fail(ErrorKind::Contract, "classifier returned label " + std::to_string(raw));
      const int voted = poll.push(raw);
      const int truth = to_space(w.label, true);
      const int raw_s = to_space(raw, false), voted_s = to_space(voted, false);
      ++r.stats.confusion_raw[truth][raw_s];
      ++r.stats.confusion_voted[truth][voted_s];
      raw_ok += raw_s == truth;
      voted_ok += voted_s == truth;
    }
  }
  r.windows = total;
  r.raw_accuracy = static_cast<double>(raw_ok) / static_cast<double>(total);
  r.voted_accuracy = static_cast<double>(voted_ok) / static_cast<double>(total);
  r.latency_p50_ms = percentile(r.stats.latency_ms, 50.0);
  r.latency_p95_ms = percentile(r.stats.latency_ms, 95.0);
  return r;
}

EvalReport evaluate(const Model& model, std::span<const PreparedClip> clips, const EvalOptions& opts) {
  return evaluate(model_classifier(model), clips, opts);
}

std::string report_to_json(const EvalReport& r) {
  json doc{{"format", "intercnn-eval-report"},
           {"version", 1},
           {"model", r.model},
           {"labels", label_space_name(r.options.labels)},
           {"occlusion", occlusion_name(r.options.occlusion)},
           {"vote_n", r.options.vote_n},
           {"stride", r.options.stride},
           {"windows", r.windows},
           {"classes", r.classes},
           {"accuracy", {{"raw", r.raw_accuracy}, {"voted", r.voted_accuracy}}},
           {"confusion", {{"raw", r.stats.confusion_raw}, {"voted", r.stats.confusion_voted}}},
           {"latency_ms", {{"p50", r.latency_p50_ms}, {"p95", r.latency_p95_ms}, {"samples", r.stats.latency_ms.size()}}},
           {"params", r.stats.params},
           {"flops", r.stats.flops}};
  return doc.dump(2);
}

// ---------------------------------------------------------------------------

BenchRow bench_block(const ModelConfig& base, const BlockKind& block, std::size_t channels, std::size_t iterations,
                     std::size_t warmup, std::uint64_t seed) {
  if (channels == 0 || iterations == 0) fail(ErrorKind::Config, "bench needs channels and iterations >= 1");
  BenchRow row;
  row.block = block;
  row.channels = channels;
  ParamStore store;
  const CnnBlock b = CnnBlock::create(store, "bench", block, channels, channels, 1, seed);
  row.block_params = count_params(store, b);
  ModelConfig cfg = base;
  cfg.block = block;
  row.block_flops = count_flops(b, Shape{1, cfg.input_height(), cfg.input_width(), channels});

  const Model m = Model::build(cfg, seed);
  row.model_params = m.param_count();
  row.model_flops = m.flop_count();
  std::mt19937_64 rng(mix_seed(seed, 0xbe));
  std::uniform_real_distribution<double> u(0.0, 1.0), f(-1.0, 1.0);
  auto fill = [&](Shape shape, bool flow) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, flow ? f(rng) : u(rng));
    return t;
  };
  SampleWindow w;
  const std::size_t h = cfg.input_height(), wd = cfg.input_width();
  w.side_frames = fill({cfg.frames, h, wd, 3}, false);
  w.side_flows = fill({cfg.flows, h, wd, 2}, true);
  w.front_frames = fill({cfg.frames, h, wd, 3}, false);
  w.front_flows = fill({cfg.flows, h, wd, 2}, true);
  for (std::size_t i = 0; i < warmup; ++i) (void)classify_window(m, w);
  std::vector<double> ms;
  for (std::size_t i = 0; i < iterations; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)classify_window(m, w);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  row.latency_p50_ms = percentile(ms, 50.0);
  row.latency_p95_ms = percentile(ms, 95.0);
  return row;
}

std::string bench_to_json(std::span<const BenchRow> rows) {
  json arr = json::array();
  for (const BenchRow& r : rows)
    arr.push_back({{"block", block_variant_name(r.block.variant)},
                   {"channels", r.channels},
                   {"block_params", r.block_params},
                   {"block_flops", r.block_flops},
                   {"model_params", r.model_params},
                   {"model_flops", r.model_flops},
                   {"latency_ms", {{"p50", r.latency_p50_ms}, {"p95", r.latency_p95_ms}}}});
  return json{{"format", "intercnn-bench"}, {"version", 1}, {"rows", arr}}.dump(2);
}

// ---------------------------------------------------------------------------

TensorMap export_activations(const Model& model, const SampleWindow& window, std::span<const std::string> tags) {
  std::vector<std::string> known;
  for (const auto& [tag, shape] : model.activation_shapes()) known.push_back(tag);
  for (const std::string& t : tags)
    if (std::find(known.begin(), known.end(), t) == known.end())
      fail(ErrorKind::Lookup, "unknown activation tag '" + t + "'");
  TensorMap out;
  ActivationSink sink = [&](const std::string& tag, const Tensor& v) {
    if (std::find(tags.begin(), tags.end(), tag) != tags.end()) out.insert_or_assign(tag, v);
  };
  const SampleWindow* w = &window;
  model.logits(make_batch(std::span<const SampleWindow* const>(&w, 1), model.dtype()), &sink);
  return out;
}

void export_activations(const Model& model, const SampleWindow& window, std::span<const std::string> tags,
                        const std::filesystem::path& out) {
  write_container(export_activations(model, window, tags), out);
}

}  // namespace icnn
