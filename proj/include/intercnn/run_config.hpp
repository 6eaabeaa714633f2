#pragma once

#include <string>

#include "intercnn/data.hpp"
#include "intercnn/inference.hpp"
#include "intercnn/model.hpp"
#include "intercnn/training.hpp"

namespace icnn {

struct RunPaths {
  std::string raw;         // synthetic or recorded raw dataset
  std::string processed;   // preprocessed dataset
  std::string checkpoint;  // model checkpoint file
};

/// Everything one CLI invocation needs. Document layout:
/// {"seed":N,"paths":{"raw","processed","checkpoint"},"model":{…},"data":{…},
///  "train":{batch_size,max_epochs,max_steps,eval_period,patience,min_delta,lr,stream_dropout_p},
///  "eval":{labels,occlusion,drop_p,vote_n,stride,warmup}}
/// Every section is optional; unknown keys anywhere are rejected. The run seed
/// drives data generation, model initialisation, shuffling and drop_front coins.
struct RunConfig {
  std::uint64_t seed = 1;
  RunPaths paths;
  ModelConfig model;
  DataConfig data;
  TrainConfig train;
  EvalOptions eval;

  void validate() const;
  std::uint64_t model_seed() const;
};

RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace icnn
