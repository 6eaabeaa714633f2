#include "intercnn/run_config.hpp"

#include "config_json.hpp"

namespace icnn {

using detail::json;
using detail::read_opt;
using detail::require_keys;

namespace {

void apply_train(TrainConfig& t, const json& j) {
  require_keys(j,
               {"batch_size", "max_epochs", "max_steps", "eval_period", "patience", "min_delta", "lr",
                "stream_dropout_p"},
               "train");
  read_opt(j, "batch_size", t.batch_size, "train");
  read_opt(j, "max_epochs", t.max_epochs, "train");
  read_opt(j, "max_steps", t.max_steps, "train");
  read_opt(j, "eval_period", t.eval_period, "train");
  read_opt(j, "patience", t.patience, "train");
  read_opt(j, "min_delta", t.min_delta, "train");
  read_opt(j, "lr", t.lr, "train");
  read_opt(j, "stream_dropout_p", t.stream_dropout_p, "train");
}

void apply_eval(EvalOptions& e, const json& j) {
  require_keys(j, {"labels", "occlusion", "drop_p", "vote_n", "stride", "warmup"}, "eval");
  std::string s;
  if (j.contains("labels")) {
    read_opt(j, "labels", s, "eval");
    e.labels = parse_label_space(s);
  }
  if (j.contains("occlusion")) {
    read_opt(j, "occlusion", s, "eval");
    e.occlusion = parse_occlusion(s);
  }
  read_opt(j, "drop_p", e.drop_p, "eval");
  read_opt(j, "vote_n", e.vote_n, "eval");
  read_opt(j, "stride", e.stride, "eval");
  read_opt(j, "warmup", e.warmup, "eval");
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  data.validate();
  train.validate();
  if (eval.vote_n < 1) fail(ErrorKind::Config, "eval.vote_n must be >= 1");
  if (eval.stride < 1) fail(ErrorKind::Config, "eval.stride must be >= 1");
  if (!(eval.drop_p >= 0.0 && eval.drop_p <= 1.0)) fail(ErrorKind::Config, "eval.drop_p must lie in [0, 1]");
  if (model.input_height() != data.side_crop.out_h || model.input_width() != data.side_crop.out_w ||
      data.side_crop.out_h != data.front_crop.out_h || data.side_crop.out_w != data.front_crop.out_w)
    fail(ErrorKind::Config, "model input " + std::to_string(model.input_height()) + "x" +
                                std::to_string(model.input_width()) + " does not match the data crops");
}

std::uint64_t RunConfig::model_seed() const { return mix_seed(seed, 0x6d6f64656c); }

RunConfig run_config_from_json(const std::string& text) {
  const json j = detail::parse_json(text, "run config");
  require_keys(j, {"seed", "paths", "model", "data", "train", "eval"}, "run config");
  RunConfig c;
  read_opt(j, "seed", c.seed, "run config");
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    require_keys(p, {"raw", "processed", "checkpoint"}, "paths");
    read_opt(p, "raw", c.paths.raw, "paths");
    read_opt(p, "processed", c.paths.processed, "paths");
    read_opt(p, "checkpoint", c.paths.checkpoint, "paths");
  }
  if (j.contains("model")) detail::apply_model_json(c.model, j.at("model"));
  if (j.contains("data")) detail::apply_data_json(c.data, j.at("data"));
  if (j.contains("train")) apply_train(c.train, j.at("train"));
  if (j.contains("eval")) apply_eval(c.eval, j.at("eval"));
  c.train.seed = c.seed;
  c.eval.seed = c.seed;
  c.validate();
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  const EvalOptions& e = c.eval;
  json j{{"seed", c.seed},
         {"paths", {{"raw", c.paths.raw}, {"processed", c.paths.processed}, {"checkpoint", c.paths.checkpoint}}},
         {"model", json::parse(model_config_to_json(c.model))},
         {"data", detail::data_json(c.data)},
         {"train",
          {{"batch_size", t.batch_size},
           {"max_epochs", t.max_epochs},
           {"max_steps", t.max_steps},
           {"eval_period", t.eval_period},
           {"patience", t.patience},
           {"min_delta", t.min_delta},
           {"lr", t.lr},
           {"stream_dropout_p", t.stream_dropout_p}}},
         {"eval",
          {{"labels", label_space_name(e.labels)},
           {"occlusion", occlusion_name(e.occlusion)},
           {"drop_p", e.drop_p},
           {"vote_n", e.vote_n},
           {"stride", e.stride},
           {"warmup", e.warmup}}}};
  return j.dump(2);
}

}  // namespace icnn
