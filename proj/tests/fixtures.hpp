#pragma once

#include <algorithm>
#include <random>
#include <string>

#include "intercnn/data.hpp"
#include "intercnn/model.hpp"
#include "oracles.hpp"

namespace fixture {

using namespace icnn;

inline ModelConfig tiny_model(std::size_t classes = 9) {
  ModelConfig c;
  c.stack_depth = 1;
  c.interweave_depth = 2;
  c.downsample_every = 2;
  c.base_width = 2;
  c.height = c.width = 6;
  c.classes = classes;
  return c;
}

// Frames encode the label as brightness so that windows are learnable.
inline PreparedClip labelled_clip(const std::string& id, std::size_t frames, std::uint64_t seed, std::size_t h = 6,
                                  std::size_t segment = 20) {
  std::mt19937_64 rng(seed);
  std::vector<int> labels(frames);
  std::uniform_int_distribution<int> cls(0, 8);
  int current = cls(rng);
  for (std::size_t t = 0; t < frames; ++t) {
    if (t % segment == 0) current = cls(rng);
    labels[t] = current;
  }
  std::normal_distribution<double> noise(0.0, 0.02);
  Tensor side({frames, h, h, 3}), front({frames, h, h, 3});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t k = 0; k < h * h * 3; ++k) {
      const double base = (labels[t] + 0.5) / 9.0;
      side.set(t * h * h * 3 + k, std::clamp(base + noise(rng), 0.0, 1.0));
      front.set(t * h * h * 3 + k, std::clamp(1.0 - base + noise(rng), 0.0, 1.0));
    }
  return prepare_clip(id, side, front, labels, {0.5, 5});
}

inline WindowBatch random_batch(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  WindowBatch b;
  const std::size_t h = c.input_height(), w = c.input_width();
  b.side_frames = oracle::random_tensor({n, c.frames, h, w, 3}, rng, DType::f32, 0.0, 1.0);
  b.side_flows = oracle::random_tensor({n, c.flows, h, w, 2}, rng, DType::f32);
  b.front_frames = oracle::random_tensor({n, c.frames, h, w, 3}, rng, DType::f32, 0.0, 1.0);
  b.front_flows = oracle::random_tensor({n, c.flows, h, w, 2}, rng, DType::f32);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(i % c.classes));
  return b;
}

inline SampleWindow random_window(const ModelConfig& c, std::uint64_t seed, int label = 0) {
  std::mt19937_64 rng(seed);
  SampleWindow w;
  const std::size_t h = c.input_height(), wd = c.input_width();
  w.side_frames = oracle::random_tensor({c.frames, h, wd, 3}, rng, DType::f32, 0.0, 1.0);
  w.side_flows = oracle::random_tensor({c.flows, h, wd, 2}, rng, DType::f32);
  w.front_frames = oracle::random_tensor({c.frames, h, wd, 3}, rng, DType::f32, 0.0, 1.0);
  w.front_flows = oracle::random_tensor({c.flows, h, wd, 2}, rng, DType::f32);
  w.label = label;
  return w;
}

}  // namespace fixture
