#include "intercnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "intercnn/labels.hpp"

namespace icnn {

AdamState AdamState::init(const ParamStore& params, const AdamConfig& cfg) {
  AdamState s;
  s.cfg = cfg;
  s.m.resize(params.size());
  s.v.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params.trainable(i)) {
      s.m[i] = Tensor::zeros_like(params.value(i));
      s.v[i] = Tensor::zeros_like(params.value(i));
    }
  return s;
}

void adam_step(ParamStore& params, std::span<const Tensor> grads, AdamState& state) {
  if (grads.size() != params.size())
    fail(ErrorKind::Contract, "adam_step: " + std::to_string(grads.size()) + " gradients for " +
                                  std::to_string(params.size()) + " parameters");
  if (state.m.size() != params.size()) fail(ErrorKind::Contract, "adam_step: optimizer state does not match model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params.trainable(i) || grads[i].empty()) continue;
    if (grads[i].shape() != params.value(i).shape())
      fail(ErrorKind::Shape, "gradient for " + params.name(i) + " has shape " + shape_str(grads[i].shape()));
    if (!grads[i].all_finite()) fail(ErrorKind::Training, "non-finite gradient for parameter " + params.name(i));
  }
  const AdamConfig& c = state.cfg;
  const std::uint64_t t = ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params.trainable(i) || grads[i].empty()) continue;
    Tensor& p = params.value(i);
    dispatch(p.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto w = p.data<T>();
      auto m = state.m[i].data<T>();
      auto v = state.v[i].data<T>();
      const Tensor g64 = grads[i].dtype() == p.dtype() ? grads[i] : grads[i].cast(p.dtype());
      auto g = g64.data<T>();
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double gk = g[k];
        const double mk = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
        const double vk = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
        m[k] = static_cast<T>(mk);
        v[k] = static_cast<T>(vk);
        w[k] = static_cast<T>(w[k] - c.lr * (mk / bc1) / (std::sqrt(vk / bc2) + c.epsilon));
      }
    });
  }
}

// ---------------------------------------------------------------------------

bool stream_dropout_coin(double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::Config, "stream dropout probability must lie in [0, 1]");
  if (p == 0.0) return false;
  if (p == 1.0) return true;
  std::mt19937_64 rng(seed);
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

SampleWindow apply_stream_dropout(const SampleWindow& window, double p, std::uint64_t seed) {
  SampleWindow out = window;
  if (stream_dropout_coin(p, seed)) {
    out.front_frames.fill(0.0);
    out.front_flows.fill(0.0);
  }
  return out;
}

void apply_stream_dropout(WindowBatch& batch, double p, std::uint64_t seed) {
  const std::size_t n = batch.size();
  if (n == 0) return;
  const std::size_t frames = batch.front_frames.numel() / n, flows = batch.front_flows.numel() / n;
  for (std::size_t i = 0; i < n; ++i) {
    if (!stream_dropout_coin(p, mix_seed(seed, i))) continue;
    for (std::size_t k = 0; k < frames; ++k) batch.front_frames.set(i * frames + k, 0.0);
    for (std::size_t k = 0; k < flows; ++k) batch.front_flows.set(i * flows + k, 0.0);
  }
}

int target_label(int behavior_id, std::size_t classes) {
  if (classes == 5) return aggregate_label_id(behavior_id);
  behavior_from_id(behavior_id);
  return behavior_id;
}

WindowSet make_window_set(std::span<const PreparedClip> clips, std::size_t stride) {
  return WindowSet{clips, index_windows(clips, stride)};
}

WindowBatch gather_batch(const WindowSet& set, std::span<const std::size_t> indices, std::size_t classes,
                         DType dtype) {
  std::vector<SampleWindow> windows;
  windows.reserve(indices.size());
  for (std::size_t i : indices) {
    const WindowRef& r = set.refs.at(i);
    windows.push_back(window_at(set.clips[r.clip], r.start));
    windows.back().label = target_label(windows.back().label, classes);
  }
  return make_batch(std::span<const SampleWindow>(windows), dtype);
}

void TrainConfig::validate() const {
  if (batch_size < 1) fail(ErrorKind::Config, "batch_size must be >= 1");
  if (max_epochs < 1) fail(ErrorKind::Config, "max_epochs must be >= 1");
  if (patience < 1) fail(ErrorKind::Config, "patience must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail(ErrorKind::Config, "lr must be finite and >= 0");
  if (!(min_delta >= 0.0) || !std::isfinite(min_delta)) fail(ErrorKind::Config, "min_delta must be finite and >= 0");
  if (!(stream_dropout_p >= 0.0 && stream_dropout_p <= 1.0))
    fail(ErrorKind::Config, "stream_dropout_p must lie in [0, 1]");
}

// ---------------------------------------------------------------------------

namespace {

std::size_t count_correct(const Tensor& z, std::span<const int> labels) {
  const std::size_t k = z.shape().back();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (z.at(i * k + c) > z.at(i * k + best)) best = c;
    hits += static_cast<int>(best) == labels[i];
  }
  return hits;
}

}  // namespace

double train_step(Model& model, const WindowBatch& batch, AdamState& adam, const StepOptions& opts,
                  std::size_t* correct) {
  WindowBatch b = batch;
  if (opts.dropout_p > 0.0) apply_stream_dropout(b, opts.dropout_p, opts.dropout_seed);
  ParamStore& store = model.params();
  Tape tape;
  const std::vector<Var> vars = bind_params(tape, store, true);
  ForwardContext ctx{tape, vars, Mode::Train, opts.update_running_stats ? &store : nullptr};
  const Var logits = model.forward(ctx, b);
  if (correct) *correct = count_correct(logits.value(), b.labels);
  const Var loss = ad::softmax_cross_entropy(logits, b.labels);
  const double value = loss.value().at(0);
  tape.backward(loss);
  std::vector<Tensor> grads(store.size());
  for (std::size_t i = 0; i < store.size(); ++i)
    if (store.trainable(i))
      if (const Tensor* g = tape.grad(vars[i])) grads[i] = *g;
  adam_step(store, grads, adam);
  return value;
}

LossAccuracy evaluate_loss(const Model& model, const WindowSet& set, std::size_t batch_size) {
  if (set.size() == 0) fail(ErrorKind::Config, "cannot evaluate an empty window set");
  const std::size_t k = model.config().classes;
  LossAccuracy r;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(set.size(), start + batch_size); ++i) idx.push_back(i);
    const WindowBatch b = gather_batch(set, idx, k, model.dtype());
    const Tensor z = model.logits(b);
    const auto ce = ops::softmax_cross_entropy(z, b.labels);
    loss_sum += ce.loss * static_cast<double>(b.size());
    correct += count_correct(z, b.labels);
  }
  r.windows = set.size();
  r.loss = loss_sum / static_cast<double>(r.windows);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.windows);
  return r;
}

std::string format_history_row(const HistoryRow& row) {
  std::ostringstream os;
  os.precision(8);
  os << row.step << ", " << row.split << ", " << row.loss << ", " << row.accuracy;
  return os.str();
}

FitResult fit(Model& model, const WindowSet& train, const WindowSet& validation, const TrainConfig& cfg,
              const HistorySink& sink) {
  cfg.validate();
  if (train.size() == 0) fail(ErrorKind::Config, "training split has no windows");
  if (validation.size() == 0) fail(ErrorKind::Config, "validation split has no windows");
  AdamState adam = AdamState::init(model.params(), AdamConfig{cfg.lr});
  const std::size_t k = model.config().classes;
  const std::size_t steps_per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t period = cfg.eval_period == 0 ? steps_per_epoch : cfg.eval_period;

  FitResult result;
  ParamStore best = model.params();
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  double period_loss = 0.0;
  std::size_t period_correct = 0, period_windows = 0;

  auto emit = [&](const HistoryRow& row) {
    result.history.push_back(row);
    if (sink) sink(row);
  };

  std::vector<std::size_t> order(train.size());
  std::vector<std::size_t> idx;
  bool done = false;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs && !done; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(cfg.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t s = 0; s < steps_per_epoch && !done; ++s) {
      idx.assign(order.begin() + static_cast<long>(s * cfg.batch_size),
                 order.begin() + static_cast<long>(std::min(train.size(), (s + 1) * cfg.batch_size)));
      const WindowBatch batch = gather_batch(train, idx, k, model.dtype());
      const StepOptions step{cfg.stream_dropout_p, mix_seed(mix_seed(cfg.seed, 0x5eed), result.steps), cfg.lr > 0.0};
      std::size_t hits = 0;
      period_loss += train_step(model, batch, adam, step, &hits) *
                     static_cast<double>(batch.size());
      period_correct += hits;
      period_windows += batch.size();
      ++result.steps;

      const bool last = cfg.max_steps != 0 && result.steps >= cfg.max_steps;
      if (result.steps % period == 0 || last) {
        const double n = static_cast<double>(period_windows);
        emit({result.steps, "train", period_loss / n, static_cast<double>(period_correct) / n});
        period_loss = 0.0;
        period_correct = period_windows = 0;
        const LossAccuracy val = evaluate_loss(model, validation, std::max<std::size_t>(cfg.batch_size, 16));
        emit({result.steps, "validation", val.loss, val.accuracy});
        ++result.evaluations;
        if (val.loss < best_loss - cfg.min_delta) {
          best_loss = val.loss;
          best = model.params();
          result.best_step = result.steps;
          since_best = 0;
        } else if (++since_best >= cfg.patience) {
          result.stopped_early = true;
          done = true;
        }
      }
      if (last) done = true;
    }
  }
  model.params() = best;
  result.best_validation_loss = best_loss;
  return result;
}

}  // namespace icnn
