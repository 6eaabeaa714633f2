#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <unistd.h>

#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "block_harness.hpp"
#include "intercnn/container.hpp"
#include "intercnn/labels.hpp"
#include "intercnn/model.hpp"
#include "oracles.hpp"

using namespace icnn;

namespace {

ModelConfig small(ModelKind kind, BlockKind block = BlockKind::mobilenet()) {
  ModelConfig c;
  c.kind = kind;
  c.block = block;
  c.stack_depth = 2;
  c.interweave_depth = 3;
  c.downsample_every = 2;
  c.base_width = 2;
  c.height = c.width = 8;
  c.frames = 3;
  c.flows = 2;
  return c;
}

WindowBatch random_batch(const ModelConfig& c, std::size_t n, std::mt19937_64& rng, DType dt = DType::f32) {
  WindowBatch b;
  const std::size_t h = c.input_height(), w = c.input_width();
  b.side_frames = oracle::random_tensor({n, c.frames, h, w, 3}, rng, dt, 0.0, 1.0);
  b.side_flows = oracle::random_tensor({n, c.flows, h, w, 2}, rng, dt);
  b.front_frames = oracle::random_tensor({n, c.frames, h, w, 3}, rng, dt, 0.0, 1.0);
  b.front_flows = oracle::random_tensor({n, c.flows, h, w, 2}, rng, dt);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(i % c.classes));
  return b;
}

std::filesystem::path temp_dir() {
  auto d = std::filesystem::temp_directory_path() / ("icnn_models_" + std::to_string(::getpid()));
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_SUITE("labels") {
  TEST_CASE("aggregation mapping") {
    CHECK(aggregate_label(Behavior::Texting) == AggregatedBehavior::UsingPhone);
    CHECK(aggregate_label(Behavior::Drinking) == AggregatedBehavior::EatAndDrink);
    CHECK(aggregate_label(Behavior::NormalDriving) == AggregatedBehavior::NormalDriving);
    CHECK(aggregate_label(Behavior::Talking) == AggregatedBehavior::Talking);
    CHECK(aggregate_label(Behavior::Preparing) == AggregatedBehavior::Preparing);
  }

  TEST_CASE("aggregation is total and surjective with the right fibres") {
    std::map<int, int> fibre;
    for (int id = 0; id < 9; ++id) fibre[aggregate_label_id(id)]++;
    CHECK(fibre.size() == 5);
    CHECK(fibre[static_cast<int>(AggregatedBehavior::UsingPhone)] == 4);
    CHECK(fibre[static_cast<int>(AggregatedBehavior::EatAndDrink)] == 2);
    for (Behavior b : {Behavior::Texting, Behavior::Searching, Behavior::WatchingVideo, Behavior::Gaming})
      CHECK(aggregate_label(b) == AggregatedBehavior::UsingPhone);
    for (Behavior b : {Behavior::Eating, Behavior::Drinking}) CHECK(aggregate_label(b) == AggregatedBehavior::EatAndDrink);
  }

  TEST_CASE("names and ids") {
    const char* names[] = {"NormalDriving", "Texting",       "Eating", "Talking",  "Searching",
                           "Drinking",      "WatchingVideo", "Gaming", "Preparing"};
    for (int id = 0; id < 9; ++id) CHECK(std::string(behavior_name(behavior_from_id(id))) == names[id]);
    CHECK_THROWS_AS(behavior_from_id(9), Error);
    CHECK_THROWS_AS(behavior_from_id(-1), Error);
  }
}

TEST_SUITE("config") {
  TEST_CASE("stream requirements") {
    ModelConfig c = small(ModelKind::InterCNN);
    c.streams.front_flows = false;
    CHECK_THROWS_AS(c.validate(), Error);
    c.kind = ModelKind::TSCNN;
    CHECK_NOTHROW(c.validate());
    c.streams.side_flows = false;
    CHECK_THROWS_AS(c.validate(), Error);
    c.kind = ModelKind::PlainCNN;
    CHECK_NOTHROW(c.validate());
    c.streams.side_frames = false;
    CHECK_THROWS_AS(Model::build(c, 1), Error);
  }

  TEST_CASE("depths, widths and classes") {
    ModelConfig c = small(ModelKind::InterCNN);
    c.stack_depth = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = small(ModelKind::InterCNN);
    c.classes = 7;
    CHECK_THROWS_AS(c.validate(), Error);
  }

  TEST_CASE("json round trip and strict keys") {
    ModelConfig c = small(ModelKind::TSCNN, BlockKind::mobilenet_v2(3));
    c.classes = 5;
    const ModelConfig back = model_config_from_json(model_config_to_json(c));
    CHECK(model_config_to_json(back) == model_config_to_json(c));
    CHECK_THROWS_AS(model_config_from_json(R"({"kind":"intercnn","depth":3})"), Error);
    CHECK_THROWS_AS(model_config_from_json(R"({"block":{"variant":"mobilenet","alpha":1}})"), Error);
    CHECK_THROWS_AS(model_config_from_json(R"({"kind":"rnn"})"), Error);
    CHECK_THROWS_AS(model_config_from_json("{not json"), Error);
  }
}

TEST_SUITE("build") {
  TEST_CASE("logits shape for every kind and batch size") {
    std::mt19937_64 rng(1);
    for (ModelKind kind : {ModelKind::PlainCNN, ModelKind::TSCNN, ModelKind::InterCNN})
      for (std::size_t classes : {9u, 5u}) {
        ModelConfig c = small(kind);
        c.classes = classes;
        const Model m = Model::build(c, 3);
        for (std::size_t n : {1u, 3u}) {
          Tensor z = m.logits(random_batch(c, n, rng));
          CHECK(z.shape() == Shape{n, classes});
          CHECK(z.all_finite());
        }
      }
  }

  TEST_CASE("default desk config builds and runs") {
    ModelConfig c;
    c.stack_depth = 1;
    c.interweave_depth = 5;
    const Model m = Model::build(c, 1);
    std::mt19937_64 rng(2);
    CHECK(m.logits(random_batch(c, 2, rng)).shape() == Shape{2, 9});
  }

  TEST_CASE("mobilenet model is smaller than vanilla") {
    for (ModelKind kind : {ModelKind::PlainCNN, ModelKind::TSCNN, ModelKind::InterCNN}) {
      const Model mob = Model::build(small(kind, BlockKind::mobilenet()), 1);
      const Model van = Model::build(small(kind, BlockKind::vanilla()), 1);
      CHECK(mob.param_count() < van.param_count());
      CHECK(mob.flop_count() < van.flop_count());
    }
  }

  TEST_CASE("width cap and downsampling plan") {
    ModelConfig c = small(ModelKind::InterCNN);
    c.interweave_depth = 10;
    c.downsample_every = 1;
    c.height = c.width = 64;
    c.max_width_mult = 4;
    const Model m = Model::build(c, 1);
    std::map<std::string, Shape> shapes;
    for (auto& [tag, s] : m.activation_shapes()) shapes[tag] = s;
    CHECK(shapes.at("side/fused") == Shape{1, 64, 64, 4});
    CHECK(shapes.at("interweave1/stream1") == Shape{1, 32, 32, 8});
    CHECK(shapes.at("interweave2/stream1") == Shape{1, 16, 16, 8});
    CHECK(shapes.at("interweave6/stream2") == Shape{1, 1, 1, 8});
    CHECK(shapes.at("pooled") == Shape{1, 16});
  }

  TEST_CASE("same seed gives identical parameters") {
    const ModelConfig c = small(ModelKind::InterCNN);
    CHECK(Model::build(c, 42).params().bitwise_equal(Model::build(c, 42).params()));
    CHECK_FALSE(Model::build(c, 42).params().bitwise_equal(Model::build(c, 43).params()));
  }

  TEST_CASE("param count equals the sum over components") {
    const Model m = Model::build(small(ModelKind::InterCNN), 5);
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < m.params().size(); ++i)
      if (m.params().trainable(i)) total += m.params().value(i).numel();
    CHECK(m.param_count() == total);
  }

  TEST_CASE("activation tags") {
    const Model m = Model::build(small(ModelKind::InterCNN), 5);
    std::set<std::string> tags;
    for (auto& [tag, s] : m.activation_shapes()) tags.insert(tag);
    for (const char* t : {"side_spatial/block0", "front_temporal/block1", "side/temporal_fusion", "front/fused",
                          "interweave3/stream2", "pooled", "hidden", "logits"})
      CHECK(tags.count(t) == 1);
    const Model p = Model::build(small(ModelKind::PlainCNN), 5);
    std::set<std::string> ptags;
    for (auto& [tag, s] : p.activation_shapes()) ptags.insert(tag);
    CHECK(ptags.count("block3") == 1);
    CHECK(ptags.count("front/fused") == 0);
  }
}

TEST_SUITE("forward") {
  TEST_CASE("zero window gives finite logits") {
    const ModelConfig c = small(ModelKind::InterCNN);
    const Model m = Model::build(c, 7);
    std::mt19937_64 rng(3);
    WindowBatch b = random_batch(c, 2, rng);
    for (Tensor* t : {&b.side_frames, &b.side_flows, &b.front_frames, &b.front_flows}) t->fill(0.0);
    CHECK(m.logits(b).all_finite());
  }

  TEST_CASE("dimension mismatch is a shape error") {
    const ModelConfig c = small(ModelKind::InterCNN);
    const Model m = Model::build(c, 7);
    std::mt19937_64 rng(4);
    WindowBatch b = random_batch(c, 2, rng);
    b.front_flows = Tensor({2, c.flows, 8, 7, 2});
    try {
      m.logits(b);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Shape);
    }
  }

  TEST_CASE("eval forward is deterministic and batch equivariant") {
    const ModelConfig c = small(ModelKind::InterCNN);
    const Model m = Model::build(c, 8);
    std::mt19937_64 rng(5);
    const WindowBatch b = random_batch(c, 3, rng);
    const Tensor z = m.logits(b);
    CHECK(z.bitwise_equal(m.logits(b)));

    // reverse the batch order
    WindowBatch r = b;
    for (Tensor WindowBatch::*f : {&WindowBatch::side_frames, &WindowBatch::side_flows, &WindowBatch::front_frames,
                                   &WindowBatch::front_flows}) {
      const Tensor& src = b.*f;
      Tensor& dst = r.*f;
      const std::size_t per = src.numel() / 3;
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < per; ++k) dst.set((2 - i) * per + k, src.at(i * per + k));
    }
    const Tensor zr = m.logits(r);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 9; ++k) CHECK(zr.at((2 - i) * 9 + k) == doctest::Approx(z.at(i * 9 + k)).epsilon(1e-5));
  }

  TEST_CASE("side content drives the prediction when the front view is blocked") {
    const ModelConfig c = small(ModelKind::InterCNN);
    const Model m = Model::build(c, 9);
    std::mt19937_64 rng(6);
    WindowBatch b = random_batch(c, 24, rng);
    b.front_frames.fill(0.0);
    b.front_flows.fill(0.0);
    const Tensor z = m.logits(b);
    std::set<std::size_t> argmaxes;
    for (std::size_t i = 0; i < 24; ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < 9; ++k)
        if (z.at(i * 9 + k) > z.at(i * 9 + best)) best = k;
      argmaxes.insert(best);
    }
    CHECK(z.all_finite());
    CHECK(argmaxes.size() >= 2);
  }

  TEST_CASE("desk-scale InterCNN cross-entropy gradient") {
    ModelConfig c;
    c.stack_depth = 1;
    c.interweave_depth = 2;
    c.downsample_every = 2;
    c.base_width = 1;
    c.height = c.width = 4;
    const Model m = Model::build(c, 11).cast(DType::f64);
    INFO("params " << m.param_count());
    CHECK(m.param_count() <= 5000);
    CHECK(m.param_count() >= 500);
    std::mt19937_64 rng(7);
    const WindowBatch b = random_batch(c, 2, rng, DType::f64);
    for (Mode mode : {Mode::Train, Mode::Eval}) {
      auto r = harness::check_store(
          m.params(), mode, [&](const ForwardContext& ctx) { return ad::softmax_cross_entropy(m.forward(ctx, b), b.labels); },
          12);
      CHECK_MESSAGE(r.passed, r.worst_param, "[", r.worst_index, "] rel ", r.max_rel_error, " analytic ",
                    r.worst_analytic, " numeric ", r.worst_numeric);
    }
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bitwise") {
    const auto dir = temp_dir();
    const ModelConfig c = small(ModelKind::InterCNN, BlockKind::mobilenet_v2(2));
    const Model m = Model::build(c, 13);
    m.save(dir / "m.ictn");
    CHECK(std::filesystem::exists(descriptor_path(dir / "m.ictn")));
    const Model back = Model::load(dir / "m.ictn");
    CHECK(back.params().bitwise_equal(m.params()));
    CHECK(model_config_to_json(back.config()) == model_config_to_json(c));
    std::mt19937_64 rng(8);
    const WindowBatch b = random_batch(c, 2, rng);
    CHECK(back.logits(b).bitwise_equal(m.logits(b)));
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("mismatched descriptor is rejected") {
    const auto dir = temp_dir();
    const Model m = Model::build(small(ModelKind::InterCNN), 13);
    m.save(dir / "a.ictn");
    const Model other = Model::build(small(ModelKind::TSCNN), 13);
    other.save(dir / "b.ictn");
    std::filesystem::copy_file(descriptor_path(dir / "b.ictn"), descriptor_path(dir / "a.ictn"),
                               std::filesystem::copy_options::overwrite_existing);
    CHECK_THROWS_AS(Model::load(dir / "a.ictn"), Error);

    ModelConfig wider = small(ModelKind::InterCNN);
    wider.base_width = 3;
    Model::build(wider, 13).save(dir / "c.ictn");
    std::filesystem::copy_file(descriptor_path(dir / "a.ictn"), descriptor_path(dir / "c.ictn"),
                               std::filesystem::copy_options::overwrite_existing);
    CHECK_THROWS_AS(Model::load(dir / "c.ictn"), Error);
    CHECK_THROWS_AS(Model::load(dir / "missing.ictn"), Error);
    std::filesystem::remove_all(dir);
  }
}
