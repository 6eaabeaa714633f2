#include "intercnn/intercnn.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>

#include "intercnn/run_config.hpp"
#include "json_util.hpp"

struct icnn_model {
  icnn::Model model;
};

struct icnn_dataset {
  std::vector<icnn::PreparedClip> clips;
};

struct icnn_vote_poll {
  icnn::VotePoll poll;
};

namespace {

using namespace icnn;
using detail::json;

thread_local std::string g_last_error;

icnn_status status_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidShape:
    case ErrorKind::Shape: return ICNN_ERR_SHAPE;
    case ErrorKind::InvalidLabel:
    case ErrorKind::InvalidInput: return ICNN_ERR_INVALID_INPUT;
    case ErrorKind::Config: return ICNN_ERR_CONFIG;
    case ErrorKind::Format: return ICNN_ERR_FORMAT;
    case ErrorKind::Io: return ICNN_ERR_IO;
    case ErrorKind::Training: return ICNN_ERR_TRAINING;
    case ErrorKind::Lookup: return ICNN_ERR_LOOKUP;
    case ErrorKind::InsufficientFrames: return ICNN_ERR_INSUFFICIENT_FRAMES;
    case ErrorKind::Crop: return ICNN_ERR_CROP;
    case ErrorKind::CorruptedState:
    case ErrorKind::EmptyTape:
    case ErrorKind::Contract: return ICNN_ERR_INTERNAL;
  }
  return ICNN_ERR_INTERNAL;
}

template <class F>
icnn_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return ICNN_OK;
  } catch (const Error& e) {
    g_last_error = std::string(error_kind_name(e.kind())) + ": " + e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ICNN_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = std::string("internal: ") + e.what();
    return ICNN_ERR_INTERNAL;
  }
}

icnn_status bad_argument(const char* what) {
  g_last_error = std::string("argument: ") + what;
  return ICNN_ERR_ARGUMENT;
}

RunConfig config_of(const char* text) {
  return run_config_from_json(text && *text ? text : "{}");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

const PreparedClip& clip_at(const icnn_dataset* ds, std::size_t clip) {
  if (clip >= ds->clips.size())
    fail(ErrorKind::Lookup, "clip index " + std::to_string(clip) + " out of range (" +
                                std::to_string(ds->clips.size()) + " clips)");
  return ds->clips[clip];
}

SampleWindow window_of(const icnn_dataset* ds, std::size_t clip, std::size_t start) {
  const PreparedClip& c = clip_at(ds, clip);
  if (c.frames() < kWindowFrames || start > c.frames() - kWindowFrames)
    fail(ErrorKind::Lookup, "window start " + std::to_string(start) + " out of range for clip " + c.id);
  return window_at(c, start);
}

}  // namespace

extern "C" {

const char* icnn_version(void) { return "1.0.0"; }

const char* icnn_status_string(icnn_status s) {
  switch (s) {
    case ICNN_OK: return "ok";
    case ICNN_ERR_ARGUMENT: return "argument";
    case ICNN_ERR_SHAPE: return "shape";
    case ICNN_ERR_INVALID_INPUT: return "invalid-input";
    case ICNN_ERR_CONFIG: return "config";
    case ICNN_ERR_FORMAT: return "format";
    case ICNN_ERR_IO: return "io";
    case ICNN_ERR_TRAINING: return "training";
    case ICNN_ERR_LOOKUP: return "lookup";
    case ICNN_ERR_INSUFFICIENT_FRAMES: return "insufficient-frames";
    case ICNN_ERR_CROP: return "crop";
    case ICNN_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* icnn_last_error(void) { return g_last_error.c_str(); }

void icnn_string_free(char* s) { std::free(s); }

icnn_status icnn_config_normalize(const char* config_json, char** out_json) {
  if (!out_json) return bad_argument("out_json is null");
  return guarded([&] { *out_json = dup_string(run_config_to_json(config_of(config_json))); });
}

icnn_status icnn_synth(const char* config_json, const char* out_dir) {
  if (!out_dir) return bad_argument("out_dir is null");
  return guarded([&] {
    const RunConfig c = config_of(config_json);
    generate_synthetic_dataset(c.data, c.seed, out_dir);
  });
}

icnn_status icnn_preprocess(const char* config_json, const char* raw_dir, const char* out_dir) {
  if (!raw_dir || !out_dir) return bad_argument("raw_dir and out_dir are required");
  return guarded([&] { preprocess_dataset(raw_dir, config_of(config_json).data, out_dir); });
}

icnn_status icnn_dataset_open(const char* processed_dir, const char* split, icnn_dataset** out) {
  if (!processed_dir || !split || !out) return bad_argument("processed_dir, split and out are required");
  return guarded([&] {
    auto ds = std::make_unique<icnn_dataset>();
    ds->clips = load_split(processed_dir, parse_split(split));
    *out = ds.release();
  });
}

void icnn_dataset_free(icnn_dataset* ds) { delete ds; }

icnn_status icnn_dataset_clip_count(const icnn_dataset* ds, size_t* out) {
  if (!ds || !out) return bad_argument("dataset and out are required");
  *out = ds->clips.size();
  return ICNN_OK;
}

icnn_status icnn_dataset_window_count(const icnn_dataset* ds, size_t stride, size_t* out) {
  if (!ds || !out) return bad_argument("dataset and out are required");
  return guarded([&] {
    if (stride == 0) fail(ErrorKind::Config, "stride must be >= 1");
    *out = index_windows(ds->clips, stride).size();
  });
}

icnn_status icnn_model_create(const char* config_json, icnn_model** out) {
  if (!out) return bad_argument("out is null");
  return guarded([&] {
    const RunConfig c = config_of(config_json);
    *out = new icnn_model{Model::build(c.model, c.model_seed())};
  });
}

icnn_status icnn_model_load(const char* path, icnn_model** out) {
  if (!path || !out) return bad_argument("path and out are required");
  return guarded([&] { *out = new icnn_model{Model::load(path)}; });
}

icnn_status icnn_model_save(const icnn_model* model, const char* path) {
  if (!model || !path) return bad_argument("model and path are required");
  return guarded([&] { model->model.save(path); });
}

void icnn_model_free(icnn_model* model) { delete model; }

icnn_status icnn_model_stats(const icnn_model* model, uint64_t* params, uint64_t* flops) {
  if (!model) return bad_argument("model is null");
  return guarded([&] {
    if (params) *params = model->model.param_count();
    if (flops) *flops = model->model.flop_count();
  });
}

icnn_status icnn_model_describe(const icnn_model* model, char** out_json) {
  if (!model || !out_json) return bad_argument("model and out_json are required");
  return guarded([&] { *out_json = dup_string(model_config_to_json(model->model.config())); });
}

icnn_status icnn_model_activation_tags(const icnn_model* model, char** out_json) {
  if (!model || !out_json) return bad_argument("model and out_json are required");
  return guarded([&] {
    json arr = json::array();
    for (const auto& [tag, shape] : model->model.activation_shapes()) arr.push_back({{"tag", tag}, {"shape", shape}});
    *out_json = dup_string(arr.dump(2));
  });
}

icnn_status icnn_train(icnn_model* model, const icnn_dataset* train, const icnn_dataset* validation,
                       const char* config_json, icnn_history_fn history, void* user, char** out_summary_json) {
  if (!model || !train || !validation) return bad_argument("model, train and validation are required");
  return guarded([&] {
    const RunConfig c = config_of(config_json);
    const WindowSet ts = make_window_set(train->clips, c.data.train_stride);
    const WindowSet vs = make_window_set(validation->clips, c.data.eval_stride);
    HistorySink sink;
    if (history)
      sink = [&](const HistoryRow& r) { history(user, r.step, r.split.c_str(), r.loss, r.accuracy); };
    const FitResult r = fit(model->model, ts, vs, c.train, sink);
    if (out_summary_json)
      *out_summary_json = dup_string(json{{"steps", r.steps},
                                          {"evaluations", r.evaluations},
                                          {"best_step", r.best_step},
                                          {"best_validation_loss", r.best_validation_loss},
                                          {"stopped_early", r.stopped_early}}
                                         .dump(2));
  });
}

icnn_status icnn_classify(const icnn_model* model, const icnn_dataset* ds, size_t clip, size_t start,
                          int block_front, int* label, double* logits, size_t logits_cap) {
  if (!model || !ds || !label) return bad_argument("model, dataset and label are required");
  return guarded([&] {
    const Prediction p =
        classify_window(model->model, window_of(ds, clip, start), block_front ? Occlusion::BlockFront : Occlusion::None);
    if (logits) {
      if (logits_cap < p.logits.size()) fail(ErrorKind::InvalidInput, "logits buffer too small");
      std::copy(p.logits.begin(), p.logits.end(), logits);
    }
    *label = p.label;
  });
}

icnn_status icnn_evaluate(const icnn_model* model, const icnn_dataset* ds, const char* config_json,
                          char** out_report_json) {
  if (!model || !ds || !out_report_json) return bad_argument("model, dataset and out_report_json are required");
  return guarded([&] {
    const RunConfig c = config_of(config_json);
    *out_report_json = dup_string(report_to_json(evaluate(model->model, ds->clips, c.eval)));
  });
}

icnn_status icnn_export_activations(const icnn_model* model, const icnn_dataset* ds, size_t clip, size_t start,
                                    const char* const* tags, size_t tag_count, const char* out_path) {
  if (!model || !ds || !out_path || (tag_count > 0 && !tags)) return bad_argument("model, dataset and out_path are required");
  return guarded([&] {
    std::vector<std::string> names;
    if (tag_count == 0)
      for (const auto& [tag, shape] : model->model.activation_shapes()) names.push_back(tag);
    for (std::size_t i = 0; i < tag_count; ++i) {
      if (!tags[i]) fail(ErrorKind::InvalidInput, "null activation tag");
      names.emplace_back(tags[i]);
    }
    export_activations(model->model, window_of(ds, clip, start), names, out_path);
  });
}

icnn_status icnn_bench(const char* config_json, const char* blocks, size_t iterations, char** out_report_json) {
  if (!blocks || !out_report_json) return bad_argument("blocks and out_report_json are required");
  return guarded([&] {
    const RunConfig c = config_of(config_json);
    std::vector<BenchRow> rows;
    std::stringstream ss(blocks);
    std::string name;
    const double alpha = c.model.block.width_mult;
    while (std::getline(ss, name, ',')) {
      if (name.empty()) continue;
      BlockKind kind = c.model.block;
      kind.variant = parse_block_variant(name);
      const auto channels = static_cast<std::size_t>(2.0 * static_cast<double>(c.model.base_width) * alpha);
      rows.push_back(bench_block(c.model, kind, channels, iterations, c.eval.warmup, c.model_seed()));
    }
    if (rows.empty()) fail(ErrorKind::Config, "no block kinds given");
    *out_report_json = dup_string(bench_to_json(rows));
  });
}

icnn_status icnn_vote_poll_create(size_t capacity, icnn_vote_poll** out) {
  if (!out) return bad_argument("out is null");
  return guarded([&] { *out = new icnn_vote_poll{VotePoll(capacity)}; });
}

icnn_status icnn_vote_poll_push(icnn_vote_poll* poll, int label, int* voted) {
  if (!poll || !voted) return bad_argument("poll and voted are required");
  *voted = poll->poll.push(label);
  return ICNN_OK;
}

void icnn_vote_poll_free(icnn_vote_poll* poll) { delete poll; }

}  // extern "C"
