#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include "intercnn/labels.hpp"
#include "intercnn/training.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace icnn;
using namespace fixture;

namespace {

bool bitwise_equal(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Tensor &x = a.value(i), &y = b.value(i);
    if (!x.bitwise_equal(y)) return false;
  }
  return true;
}

// Straight transcription of the bias-corrected Adam recursion for one scalar.
struct ScalarAdam {
  long double m = 0, v = 0;
  int t = 0;
  long double step(long double theta, long double g, long double lr, long double b1 = 0.9L,
                   long double b2 = 0.999L, long double eps = 1e-8L) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const long double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    return theta - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace

TEST_SUITE("adam") {
  TEST_CASE("zero gradient leaves parameters unchanged") {
    ParamStore s;
    std::mt19937_64 rng(1);
    s.add("w", oracle::random_tensor({3, 4}, rng, DType::f64));
    s.add("stat", oracle::random_tensor({4}, rng, DType::f64), false);
    const ParamStore before = s;
    AdamState st = AdamState::init(s);
    std::vector<Tensor> g{Tensor({3, 4}, DType::f64), Tensor()};
    for (int i = 0; i < 5; ++i) adam_step(s, g, st);
    CHECK(bitwise_equal(s, before));
    CHECK(st.step == 5);
  }

  TEST_CASE("first step moves each coordinate by about lr against the gradient sign") {
    ParamStore s;
    std::mt19937_64 rng(2);
    s.add("w", oracle::random_tensor({10}, rng, DType::f64));
    const Tensor before = s.value(0);
    Tensor g = oracle::random_tensor({10}, rng, DType::f64);
    AdamState st = AdamState::init(s, AdamConfig{1e-3});
    adam_step(s, std::vector<Tensor>{g}, st);
    for (std::size_t i = 0; i < 10; ++i) {
      const double delta = s.value(0).at(i) - before.at(i);
      CHECK(std::abs(delta) == doctest::Approx(1e-3).epsilon(1e-4));
      CHECK((delta < 0) == (g.at(i) > 0));
    }
  }

  TEST_CASE("matches scalar recursion over many steps") {
    ParamStore s;
    s.add("w", Tensor({1}, DType::f64));
    s.value(0).set(0, 0.7);
    AdamState st = AdamState::init(s, AdamConfig{0.05});
    ScalarAdam ref;
    long double theta = 0.7L;
    for (int k = 0; k < 300; ++k) {
      const double g = std::sin(0.37 * k) + 2.0 * s.value(0).at(0);
      Tensor gt({1}, DType::f64);
      gt.set(0, g);
      adam_step(s, std::vector<Tensor>{gt}, st);
      theta = ref.step(theta, g, 0.05L);
      REQUIRE(s.value(0).at(0) == doctest::Approx(static_cast<double>(theta)).epsilon(1e-10));
    }
  }

  TEST_CASE("quadratic bowl shrinks by two orders of magnitude") {
    ParamStore s;
    std::mt19937_64 rng(3);
    s.add("w", oracle::random_tensor({16}, rng, DType::f64));
    auto norm2 = [&] {
      double n = 0;
      for (std::size_t i = 0; i < 16; ++i) n += s.value(0).at(i) * s.value(0).at(i);
      return n;
    };
    const double start = norm2();
    AdamState st = AdamState::init(s, AdamConfig{0.1});
    for (int k = 0; k < 200; ++k) {
      Tensor g = s.value(0);
      for (std::size_t i = 0; i < 16; ++i) g.set(i, 2.0 * g.at(i));
      adam_step(s, std::vector<Tensor>{g}, st);
    }
    CHECK(norm2() <= start / 100.0);
  }

  TEST_CASE("non-finite gradient names the parameter and leaves state untouched") {
    ParamStore s;
    s.add("block/conv/kernel", Tensor({2}, DType::f64));
    s.add("other", Tensor({2}, DType::f64));
    AdamState st = AdamState::init(s);
    Tensor bad({2}, DType::f64);
    bad.set(1, std::nan(""));
    try {
      adam_step(s, std::vector<Tensor>{Tensor({2}, DType::f64), bad}, st);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Training);
      CHECK(std::string(e.what()).find("other") != std::string::npos);
    }
    CHECK(st.step == 0);
    CHECK_THROWS_AS(adam_step(s, std::vector<Tensor>{Tensor({2}, DType::f64)}, st), Error);
  }
}

TEST_SUITE("stream dropout") {
  SampleWindow window(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SampleWindow w;
    w.side_frames = oracle::random_tensor({15, 3, 3, 3}, rng, DType::f32, 0.1, 1.0);
    w.side_flows = oracle::random_tensor({14, 3, 3, 2}, rng, DType::f32);
    w.front_frames = oracle::random_tensor({15, 3, 3, 3}, rng, DType::f32, 0.1, 1.0);
    w.front_flows = oracle::random_tensor({14, 3, 3, 2}, rng, DType::f32);
    return w;
  }
  bool all_zero(const Tensor& t) {
    for (std::size_t i = 0; i < t.numel(); ++i)
      if (t.at(i) != 0.0) return false;
    return true;
  }

  TEST_CASE("p = 0 and p = 1") {
    const SampleWindow w = window(1);
    for (std::uint64_t s = 0; s < 50; ++s) {
      const SampleWindow a = apply_stream_dropout(w, 0.0, s);
      CHECK(a.front_frames.bitwise_equal(w.front_frames));
      CHECK(a.front_flows.bitwise_equal(w.front_flows));
      const SampleWindow b = apply_stream_dropout(w, 1.0, s);
      CHECK(all_zero(b.front_frames));
      CHECK(all_zero(b.front_flows));
      CHECK(b.side_frames.bitwise_equal(w.side_frames));
    }
  }

  TEST_CASE("frames and flows drop together at rate p") {
    const SampleWindow w = window(2);
    std::size_t dropped = 0;
    for (std::uint64_t s = 0; s < 10000; ++s) {
      const SampleWindow a = apply_stream_dropout(w, 0.5, mix_seed(99, s));
      const bool f = all_zero(a.front_frames), g = all_zero(a.front_flows);
      REQUIRE(f == g);
      dropped += f;
    }
    CHECK(dropped >= 4700);
    CHECK(dropped <= 5300);
  }

  TEST_CASE("batch form drops whole samples") {
    const ModelConfig c = tiny_model();
    WindowBatch b = random_batch(c, 64, 5);
    const WindowBatch orig = b;
    apply_stream_dropout(b, 0.5, 17);
    const std::size_t per = b.front_frames.numel() / 64, perf = b.front_flows.numel() / 64;
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      bool zero = true, same = true;
      for (std::size_t k = 0; k < per; ++k) {
        zero &= b.front_frames.at(i * per + k) == 0.0;
        same &= b.front_frames.at(i * per + k) == orig.front_frames.at(i * per + k);
      }
      for (std::size_t k = 0; k < perf; ++k) {
        zero &= b.front_flows.at(i * perf + k) == 0.0;
        same &= b.front_flows.at(i * perf + k) == orig.front_flows.at(i * perf + k);
      }
      CHECK((zero || same));
      CHECK(zero == stream_dropout_coin(0.5, mix_seed(17, i)));
      dropped += zero;
    }
    CHECK(dropped > 0);
    CHECK(dropped < 64);
    CHECK_THROWS_AS(stream_dropout_coin(1.5, 0), Error);
  }
}

TEST_SUITE("train step") {
  TEST_CASE("initial loss is near ln 9") {
    const ModelConfig c = tiny_model();
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      Model m = Model::build(c, seed);
      AdamState st = AdamState::init(m.params());
      const double loss = train_step(m, random_batch(c, 9, seed + 10), st);
      CHECK(std::abs(loss - std::log(9.0)) <= 0.5);
    }
  }

  TEST_CASE("overfits a single batch") {
    const ModelConfig c = tiny_model();
    Model m = Model::build(c, 4);
    AdamState st = AdamState::init(m.params(), AdamConfig{1e-2});
    const WindowBatch b = random_batch(c, 6, 8);
    double loss = 0;
    std::size_t steps = 0;
    for (; steps < 500; ++steps) {
      loss = train_step(m, b, st);
      if (loss < 0.1) break;
    }
    INFO("steps " << steps);
    CHECK(loss < 0.1);
  }

  TEST_CASE("fifty steps are bitwise deterministic") {
    const ModelConfig c = tiny_model();
    auto run = [&] {
      Model m = Model::build(c, 7);
      AdamState st = AdamState::init(m.params(), AdamConfig{1e-3});
      std::vector<double> losses;
      for (std::uint64_t k = 0; k < 50; ++k)
        losses.push_back(train_step(m, random_batch(c, 3, 100 + k % 4), st, {0.5, mix_seed(5, k)}));
      return std::make_pair(m, losses);
    };
    const auto [a, la] = run();
    const auto [b, lb] = run();
    CHECK(la == lb);
    CHECK(bitwise_equal(a.params(), b.params()));
  }

  TEST_CASE("running statistics move in train mode") {
    const ModelConfig c = tiny_model();
    Model m = Model::build(c, 1);
    const ParamStore before = m.params();
    AdamState st = AdamState::init(m.params(), AdamConfig{0.0});
    train_step(m, random_batch(c, 4, 3), st);
    bool moved = false;
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      if (m.params().trainable(i)) {
        CHECK(m.params().value(i).bitwise_equal(before.value(i)));
      } else {
        moved |= !m.params().value(i).bitwise_equal(before.value(i));
      }
    }
    CHECK(moved);
    const ParamStore after = m.params();
    train_step(m, random_batch(c, 4, 4), st, {0.0, 0, false});
    CHECK(m.params().bitwise_equal(after));
  }
}

TEST_SUITE("fit") {
  std::vector<PreparedClip> clips(std::size_t n, std::uint64_t seed) {
    std::vector<PreparedClip> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(labelled_clip("c" + std::to_string(i), 40, mix_seed(seed, i)));
    return out;
  }

  TEST_CASE("aggregated labels in batches") {
    const auto cs = clips(1, 1);
    const WindowSet set = make_window_set(cs, 5);
    std::vector<std::size_t> idx(set.size());
    std::iota(idx.begin(), idx.end(), 0);
    const WindowBatch b9 = gather_batch(set, idx, 9), b5 = gather_batch(set, idx, 5);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      CHECK(b9.labels[i] == set.refs[i].label);
      CHECK(b5.labels[i] == aggregate_label_id(b9.labels[i]));
    }
  }

  TEST_CASE("zero learning rate and patience 1 stop after two evaluations") {
    const auto tr = clips(2, 1), va = clips(1, 2);
    Model m = Model::build(tiny_model(), 3);
    const ParamStore before = m.params();
    TrainConfig cfg;
    cfg.lr = 0.0;
    cfg.patience = 1;
    cfg.batch_size = 4;
    cfg.eval_period = 2;
    std::vector<HistoryRow> seen;
    const FitResult r = fit(m, make_window_set(tr, 4), make_window_set(va, 4), cfg,
                            [&](const HistoryRow& row) { seen.push_back(row); });
    CHECK(r.evaluations == 2);
    CHECK(r.stopped_early);
    CHECK(r.steps == 4);
    REQUIRE(seen.size() == 4);
    CHECK(seen[0].split == "train");
    CHECK(seen[1].split == "validation");
    CHECK(seen[3].step == 4);
    CHECK(seen[1].loss == seen[3].loss);
    CHECK(format_history_row(seen[1]).rfind("2, validation, ", 0) == 0);
    for (std::size_t i = 0; i < m.params().size(); ++i)
      if (m.params().trainable(i))
        CHECK(m.params().value(i).bitwise_equal(before.value(i)));
  }

  TEST_CASE("returns the best validation checkpoint and is reproducible") {
    const auto tr = clips(3, 3), va = clips(1, 4);
    TrainConfig cfg;
    cfg.lr = 3e-3;
    cfg.batch_size = 4;
    cfg.max_epochs = 3;
    cfg.stream_dropout_p = 0.3;
    cfg.seed = 9;
    const WindowSet ts = make_window_set(tr, 2), vs = make_window_set(va, 3);
    Model a = Model::build(tiny_model(), 5), b = Model::build(tiny_model(), 5);
    const FitResult ra = fit(a, ts, vs, cfg), rb = fit(b, ts, vs, cfg);
    CHECK(bitwise_equal(a.params(), b.params()));
    REQUIRE(ra.history.size() == rb.history.size());
    double best = std::numeric_limits<double>::infinity();
    for (const HistoryRow& row : ra.history)
      if (row.split == "validation") best = std::min(best, row.loss);
    CHECK(ra.best_validation_loss == best);
    CHECK(evaluate_loss(a, vs).loss == doctest::Approx(best).epsilon(1e-9));
    CHECK(ra.evaluations == 3);
  }

  TEST_CASE("empty splits and bad configs") {
    const auto tr = clips(1, 1);
    Model m = Model::build(tiny_model(), 1);
    const WindowSet ts = make_window_set(tr, 4);
    const WindowSet empty{tr, {}};
    TrainConfig cfg;
    for (auto call : {std::function<void()>([&] { fit(m, empty, ts, cfg); }),
                      std::function<void()>([&] { fit(m, ts, empty, cfg); })}) {
      try {
        call();
        FAIL("expected error");
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
      }
    }
    cfg.patience = 0;
    CHECK_THROWS_AS(fit(m, ts, ts, cfg), Error);
    cfg = {};
    cfg.stream_dropout_p = -0.1;
    CHECK_THROWS_AS(cfg.validate(), Error);
  }
}
