/* C interface to the intercnn library. Every function returns an icnn_status;
 * on failure icnn_last_error() describes the error for the calling thread.
 * Strings returned through char** are owned by the caller and released with
 * icnn_string_free. JSON arguments use the run config layout (see README). */
#ifndef INTERCNN_H
#define INTERCNN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define ICNN_API __declspec(dllexport)
#else
#define ICNN_API __attribute__((visibility("default")))
#endif

typedef enum icnn_status {
  ICNN_OK = 0,
  ICNN_ERR_ARGUMENT = 1,       /* null handle or pointer */
  ICNN_ERR_SHAPE = 2,
  ICNN_ERR_INVALID_INPUT = 3,  /* bad values, labels or frames */
  ICNN_ERR_CONFIG = 4,
  ICNN_ERR_FORMAT = 5,
  ICNN_ERR_IO = 6,
  ICNN_ERR_TRAINING = 7,
  ICNN_ERR_LOOKUP = 8,
  ICNN_ERR_INSUFFICIENT_FRAMES = 9,
  ICNN_ERR_CROP = 10,
  ICNN_ERR_INTERNAL = 11
} icnn_status;

typedef struct icnn_model icnn_model;
typedef struct icnn_dataset icnn_dataset;
typedef struct icnn_vote_poll icnn_vote_poll;

ICNN_API const char* icnn_version(void);
ICNN_API const char* icnn_status_string(icnn_status status);
ICNN_API const char* icnn_last_error(void);
ICNN_API void icnn_string_free(char* s);

/* Validates a run config (NULL or "" means defaults) and returns it with every
 * field filled in. */
ICNN_API icnn_status icnn_config_normalize(const char* config_json, char** out_json);

ICNN_API icnn_status icnn_synth(const char* config_json, const char* out_dir);
ICNN_API icnn_status icnn_preprocess(const char* config_json, const char* raw_dir, const char* out_dir);

/* split: "train", "validation" or "test". */
ICNN_API icnn_status icnn_dataset_open(const char* processed_dir, const char* split, icnn_dataset** out);
ICNN_API void icnn_dataset_free(icnn_dataset* ds);
ICNN_API icnn_status icnn_dataset_clip_count(const icnn_dataset* ds, size_t* out);
ICNN_API icnn_status icnn_dataset_window_count(const icnn_dataset* ds, size_t stride, size_t* out);

/* Builds the model section of the config with the run seed. */
ICNN_API icnn_status icnn_model_create(const char* config_json, icnn_model** out);
ICNN_API icnn_status icnn_model_load(const char* path, icnn_model** out);
ICNN_API icnn_status icnn_model_save(const icnn_model* model, const char* path);
ICNN_API void icnn_model_free(icnn_model* model);
ICNN_API icnn_status icnn_model_stats(const icnn_model* model, uint64_t* params, uint64_t* flops);
ICNN_API icnn_status icnn_model_describe(const icnn_model* model, char** out_json);
/* JSON array of {"tag": str, "shape": [..]} for one window. */
ICNN_API icnn_status icnn_model_activation_tags(const icnn_model* model, char** out_json);

/* Called once per history row; split is "train" or "validation". */
typedef void (*icnn_history_fn)(void* user, uint64_t step, const char* split, double loss, double accuracy);

/* Runs fit with the train section of the config. Training windows use
 * data.train_stride, validation windows data.eval_stride. On success the model
 * holds the best validation checkpoint and out_summary_json (optional) receives
 * {"steps","evaluations","best_step","best_validation_loss","stopped_early"}. */
ICNN_API icnn_status icnn_train(icnn_model* model, const icnn_dataset* train, const icnn_dataset* validation,
                                const char* config_json, icnn_history_fn history, void* user,
                                char** out_summary_json);

/* Classifies the window starting at frame `start` of clip `clip`. logits may
 * be NULL; otherwise logits_cap must be at least the class count. */
ICNN_API icnn_status icnn_classify(const icnn_model* model, const icnn_dataset* ds, size_t clip, size_t start,
                                   int block_front, int* label, double* logits, size_t logits_cap);

/* Evaluation report JSON for the eval section of the config. */
ICNN_API icnn_status icnn_evaluate(const icnn_model* model, const icnn_dataset* ds, const char* config_json,
                                   char** out_report_json);

ICNN_API icnn_status icnn_export_activations(const icnn_model* model, const icnn_dataset* ds, size_t clip,
                                             size_t start, const char* const* tags, size_t tag_count,
                                             const char* out_path);

/* blocks: comma-separated list of vanilla, mobilenet, mobilenet_v2. */
ICNN_API icnn_status icnn_bench(const char* config_json, const char* blocks, size_t iterations,
                                char** out_report_json);

ICNN_API icnn_status icnn_vote_poll_create(size_t capacity, icnn_vote_poll** out);
ICNN_API icnn_status icnn_vote_poll_push(icnn_vote_poll* poll, int label, int* voted);
ICNN_API void icnn_vote_poll_free(icnn_vote_poll* poll);

#ifdef __cplusplus
}
#endif

#endif
