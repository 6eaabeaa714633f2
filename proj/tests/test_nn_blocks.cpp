#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "block_harness.hpp"
#include "oracles.hpp"

using namespace icnn;
using harness::run;

namespace {

const BlockKind kKinds[] = {BlockKind::vanilla(), BlockKind::mobilenet(), BlockKind::mobilenet_v2()};

std::string report(const GradCheckReport& r) {
  std::ostringstream os;
  os << r.worst_param << "[" << r.worst_index << "] rel " << r.max_rel_error << " analytic " << r.worst_analytic
     << " numeric " << r.worst_numeric;
  return os.str();
}

// Conv kernel at the centre tap only, producing an identity map per channel.
void set_center_identity(Tensor& k) {
  k.fill(0.0);
  const auto& s = k.shape();
  if (s.size() == 3) {
    const std::size_t c = s[2], centre = (s[0] / 2) * s[1] + s[1] / 2;
    for (std::size_t i = 0; i < c; ++i) k.set(centre * c + i, 1.0);
  } else {
    const std::size_t ci = s[2], co = s[3], centre = (s[0] / 2) * s[1] + s[1] / 2;
    for (std::size_t i = 0; i < std::min(ci, co); ++i) k.set((centre * ci + i) * co + i, 1.0);
  }
}

}  // namespace

TEST_SUITE("blocks") {
  TEST_CASE("zero input gives zero output for every kind") {
    for (const BlockKind& kind : kKinds) {
      ParamStore store;
      const CnnBlock b = CnnBlock::create(store, "b", kind, 4, 6, 2, 1);
      Tensor y = run(store, Mode::Eval, [&](auto& ctx) { return b.forward(ctx, ctx.tape.leaf(Tensor({2, 5, 5, 4}))); });
      CHECK(y.shape() == Shape{2, 3, 3, 6});
      for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.at(i) == 0.0);
    }
  }

  TEST_CASE("channel mismatch is a shape error") {
    ParamStore store;
    const CnnBlock b = CnnBlock::create(store, "b", BlockKind::mobilenet(), 4, 4, 1, 1);
    try {
      run(store, Mode::Eval, [&](auto& ctx) { return b.forward(ctx, ctx.tape.leaf(Tensor({1, 4, 4, 3}))); });
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Shape);
    }
  }

  TEST_CASE("mobilenet with transparent kernels is BN then ReLU") {
    ParamStore store;
    const CnnBlock b = CnnBlock::create(store, "b", BlockKind::mobilenet(), 3, 3, 1, 2);
    set_center_identity(store.value(*store.find("b/depthwise/conv/kernel")));
    set_center_identity(store.value(*store.find("b/pointwise/conv/kernel")));
    std::mt19937_64 rng(3);
    Tensor x = oracle::random_tensor({2, 4, 4, 3}, rng, DType::f32);
    Tensor y = run(store, Mode::Eval, [&](auto& ctx) { return b.forward(ctx, ctx.tape.leaf(x)); });
    BatchNormState bn = BatchNormState::identity(3);
    bn.mode = Mode::Eval;
    Tensor ref = ops::activation(ops::batch_norm(x, bn), Activation::Relu);
    ref = ops::activation(ops::batch_norm(ref, bn), Activation::Relu);
    CHECK(oracle::max_abs_diff(y, ref) < 1e-6);
  }

  TEST_CASE("mobilenet_v2 with zero weights is the skip path") {
    ParamStore store;
    const CnnBlock b = CnnBlock::create(store, "b", BlockKind::mobilenet_v2(), 4, 4, 1, 4);
    REQUIRE(b.has_skip());
    const ParamStore zeroed = harness::zero_convs(store);
    std::mt19937_64 rng(4);
    Tensor x = oracle::random_tensor({2, 5, 5, 4}, rng, DType::f32);
    Tensor y = run(zeroed, Mode::Eval, [&](auto& ctx) { return b.forward(ctx, ctx.tape.leaf(x)); });
    CHECK(y.bitwise_equal(x));

    ParamStore s2;
    CHECK_FALSE(CnnBlock::create(s2, "c", BlockKind::mobilenet_v2(), 4, 4, 2, 4).has_skip());
    CHECK_FALSE(CnnBlock::create(s2, "d", BlockKind::mobilenet_v2(), 4, 8, 1, 4).has_skip());
  }

  TEST_CASE("mobilenet_v2 projection stage is linear") {
    ParamStore store;
    const CnnBlock b = CnnBlock::create(store, "b", BlockKind::mobilenet_v2(2), 3, 5, 1, 5);
    const Stage& project = b.stages().back();
    CHECK(project.act == Activation::None);
    std::mt19937_64 rng(5);
    Tensor h = oracle::random_tensor({1, 3, 3, 6}, rng);
    const ParamStore s64 = store.cast(DType::f64);
    auto stage = [&](const Tensor& in) {
      return run(s64, Mode::Eval, [&](auto& ctx) { return project.forward(ctx, ctx.tape.leaf(in)); });
    };
    for (double s : {-2.5, 0.5, 3.0})
      CHECK(oracle::max_abs_diff(stage(ops::scale(h, s)), ops::scale(stage(h), s)) < 1e-12);
  }

  TEST_CASE("stride halves spatial dims") {
    for (const BlockKind& kind : kKinds) {
      ParamStore store;
      const CnnBlock b = CnnBlock::create(store, "b", kind, 2, 2, 2, 1);
      CHECK(b.output_shape({1, 8, 6, 2}) == Shape{1, 4, 3, 2});
    }
  }

  TEST_CASE("block gradients") {
    std::mt19937_64 rng(6);
    for (const BlockKind& kind : {BlockKind::vanilla(), BlockKind::mobilenet(), BlockKind::mobilenet_v2(2)})
      for (Mode mode : {Mode::Train, Mode::Eval}) {
        ParamStore store;
        const CnnBlock b = CnnBlock::create(store, "b", kind, 2, 2, 1, 6);
        auto r = harness::check_component(store, oracle::random_tensor({2, 4, 4, 2}, rng), mode,
                                          [&](auto& ctx, Var x) { return b.forward(ctx, x); }, 7);
        CHECK_MESSAGE(r.passed, std::string(block_variant_name(kind.variant)), " ", int(mode), " ", report(r));
      }
  }

  TEST_CASE("block kind validation") {
    CHECK_THROWS_AS(BlockKind::mobilenet(0.0).validate(), Error);
    CHECK_THROWS_AS(BlockKind::mobilenet(1.0, -1.0).validate(), Error);
    CHECK_THROWS_AS(BlockKind::mobilenet_v2(0).validate(), Error);
    CHECK(parse_block_variant("mobilenet_v2") == BlockVariant::MobileNetV2);
    CHECK_THROWS_AS(parse_block_variant("resnet"), Error);
  }
}

TEST_SUITE("cnn3d") {
  TEST_CASE("zero input gives zero output") {
    ParamStore store;
    const Cnn3dBlock b = Cnn3dBlock::create(store, "s", 3, 4, 1);
    Tensor y = run(store, Mode::Eval, [&](auto& ctx) { return b.forward(ctx, ctx.tape.leaf(Tensor({1, 5, 4, 4, 3}))); });
    CHECK(y.shape() == Shape{1, 5, 4, 4, 4});
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.at(i) == 0.0);
  }

  TEST_CASE("outputs bounded below by -lambda*alpha") {
    ParamStore store;
    const Cnn3dBlock b = Cnn3dBlock::create(store, "s", 2, 6, 2);
    std::mt19937_64 rng(8);
    Tensor x = oracle::random_tensor({2, 4, 5, 5, 2}, rng, DType::f32, -20.0, 20.0);
    const double bound = -kSelu.lambda * kSelu.alpha;
    for (Mode mode : {Mode::Train, Mode::Eval}) {
      Tensor y = run(store, mode, [&](auto& ctx) { return b.forward(ctx, ctx.tape.leaf(x)); });
      for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.at(i) >= bound - 1e-6);
    }
  }

  TEST_CASE("gradient check") {
    ParamStore store;
    const Cnn3dBlock b = Cnn3dBlock::create(store, "s", 2, 2, 3);
    std::mt19937_64 rng(9);
    auto r = harness::check_component(store, oracle::random_tensor({2, 3, 3, 3, 2}, rng), Mode::Train,
                                      [&](auto& ctx, Var x) { return b.forward(ctx, x); }, 10);
    CHECK_MESSAGE(r.passed, report(r));
  }
}

TEST_SUITE("fusion") {
  TEST_CASE("temporal fuse of single frames is concat") {
    std::mt19937_64 rng(11);
    Tensor a = oracle::random_tensor({2, 1, 3, 3, 2}, rng), b = oracle::random_tensor({2, 1, 3, 3, 2}, rng);
    CHECK(ops::temporal_fuse(a, b).bitwise_equal(
        ops::concat_channels(a.reshaped({2, 3, 3, 2}), b.reshaped({2, 3, 3, 2}))));
  }

  TEST_CASE("temporal fuse channel count for window depths") {
    Tensor y = ops::temporal_fuse(Tensor({1, 15, 2, 2, 3}), Tensor({1, 14, 2, 2, 3}));
    CHECK(y.shape() == Shape{1, 2, 2, 29 * 3});
    CHECK_THROWS_AS(ops::temporal_fuse(Tensor({1, 15, 2, 2, 3}), Tensor({1, 14, 2, 3, 3})), Error);
  }

  TEST_CASE("spatial fuse") {
    std::mt19937_64 rng(12);
    Tensor a = oracle::random_tensor({1, 4, 4, 3}, rng), b = oracle::random_tensor({1, 4, 4, 3}, rng);
    Tensor eye({1, 1, 6, 6}, DType::f64);
    set_center_identity(eye);
    CHECK(ops::spatial_fuse(a, b, eye, Tensor({6}, DType::f64), 1).bitwise_equal(ops::concat_channels(a, b)));

    Tensor k = oracle::random_tensor({1, 1, 6, 6}, rng);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t o = 0; o < 6; ++o) k.set((3 + i) * 6 + o, -k.at(i * 6 + o));
    Tensor z = ops::spatial_fuse(a, a, k, Tensor({6}, DType::f64), 1);
    CHECK(oracle::max_abs_diff(z, Tensor::zeros_like(z)) < 1e-14);

    CHECK(ops::spatial_fuse(a, b, k, Tensor({6}, DType::f64), 2).shape() == Shape{1, 2, 2, 6});
    CHECK_THROWS_AS(ops::spatial_fuse(a, Tensor({1, 4, 4, 2}, DType::f64), k, Tensor({6}, DType::f64), 1), Error);
  }

  TEST_CASE("spatial fusion layer gradient") {
    ParamStore store;
    const SpatialFusion f = SpatialFusion::create(store, "f", 2, 2, 13);
    std::mt19937_64 rng(13);
    Tensor other = oracle::random_tensor({1, 4, 4, 2}, rng);
    auto r = harness::check_component(store, oracle::random_tensor({1, 4, 4, 2}, rng), Mode::Eval,
                                      [&](auto& ctx, Var x) { return f.forward(ctx, x, ctx.tape.leaf(other)); }, 14);
    CHECK_MESSAGE(r.passed, report(r));
  }
}

TEST_SUITE("interweaving") {
  TEST_CASE("zero weights give the two-stream identity") {
    for (const BlockKind& kind : kKinds) {
      ParamStore store;
      const InterweavingModule m = InterweavingModule::create(store, "m", kind, 3, 3, 1, 15);
      REQUIRE_FALSE(m.has_projection());
      const ParamStore zeroed = harness::zero_convs(store);
      std::mt19937_64 rng(16);
      Tensor x1 = oracle::random_tensor({2, 4, 4, 3}, rng, DType::f32), x2 = oracle::random_tensor({2, 4, 4, 3}, rng, DType::f32);
      Tape tape;
      auto vars = bind_params(tape, zeroed, false);
      ForwardContext ctx{tape, vars, Mode::Eval};
      auto [y1, y2] = m.forward(ctx, tape.leaf(x1), tape.leaf(x2));
      CHECK(y1.value().bitwise_equal(x1));
      CHECK(y2.value().bitwise_equal(x2));
      CHECK(y1.id != y2.id);
    }
  }

  TEST_CASE("zeroed second stream keeps the first live") {
    ParamStore store;
    const InterweavingModule m = InterweavingModule::create(store, "m", BlockKind::mobilenet(), 4, 4, 1, 17);
    std::mt19937_64 rng(18);
    Tensor x1 = oracle::random_tensor({1, 5, 5, 4}, rng, DType::f32);
    Tensor x1b = ops::add(x1, oracle::random_tensor({1, 5, 5, 4}, rng, DType::f32, -0.1, 0.1));
    Tensor zeros({1, 5, 5, 4});
    auto fwd = [&](const Tensor& a) {
      Tape tape;
      auto vars = bind_params(tape, store, false);
      ForwardContext ctx{tape, vars, Mode::Eval};
      auto [y1, y2] = m.forward(ctx, tape.leaf(a), tape.leaf(zeros));
      return std::pair{y1.value(), y2.value()};
    };
    auto [a1, a2] = fwd(x1);
    auto [b1, b2] = fwd(x1b);
    CHECK(a1.all_finite());
    CHECK(a2.all_finite());
    CHECK(oracle::max_abs_diff(a1, b1) > 1e-4);
    CHECK(oracle::max_abs_diff(a2, b2) > 1e-6);  // fusion carries x1 into the blocked stream
  }

  TEST_CASE("downsampling module shapes") {
    ParamStore store;
    const InterweavingModule m = InterweavingModule::create(store, "m", BlockKind::mobilenet(), 4, 8, 2, 19);
    CHECK(m.has_projection());
    CHECK(m.output_shape({2, 8, 8, 4}) == Shape{2, 4, 4, 8});
    Tape tape;
    auto vars = bind_params(tape, store, false);
    ForwardContext ctx{tape, vars, Mode::Eval};
    auto [y1, y2] = m.forward(ctx, tape.leaf(Tensor({2, 8, 8, 4})), tape.leaf(Tensor({2, 8, 8, 4})));
    CHECK(y1.shape() == Shape{2, 4, 4, 8});
    CHECK(y2.shape() == Shape{2, 4, 4, 8});
    CHECK_THROWS_AS(m.forward(ctx, tape.leaf(Tensor({2, 8, 8, 4})), tape.leaf(Tensor({2, 4, 8, 4}))), Error);
  }

  TEST_CASE("module gradient check") {
    for (std::size_t stride : {1u, 2u}) {
      ParamStore store;
      const InterweavingModule m =
          InterweavingModule::create(store, "m", BlockKind::mobilenet(), 2, stride == 1 ? 2 : 3, stride, 20);
      std::mt19937_64 rng(21);
      Tensor x2 = oracle::random_tensor({2, 4, 4, 2}, rng);
      auto r = harness::check_component(store, oracle::random_tensor({2, 4, 4, 2}, rng), Mode::Train,
                                        [&](auto& ctx, Var x) {
                                          auto [y1, y2] = m.forward(ctx, x, ctx.tape.leaf(x2));
                                          return ad::concat_channels(y1, y2);
                                        },
                                        22);
      CHECK_MESSAGE(r.passed, "stride ", stride, " ", report(r));
    }
  }
}

TEST_SUITE("accounting") {
  TEST_CASE("closed-form parameter counts") {
    ParamStore store;
    const CnnBlock v = CnnBlock::create(store, "v", BlockKind::vanilla(), 16, 32, 1, 1);
    const CnnBlock m = CnnBlock::create(store, "m", BlockKind::mobilenet(), 16, 32, 1, 1);
    CHECK(count_params(store, v) == 3 * 3 * 16 * 32 + 32 + 2 * 32);
    CHECK(count_params(store, v) == 4704);
    CHECK(count_params(store, m) == (3 * 3 * 16 + 16 + 2 * 16) + (16 * 32 + 32 + 2 * 32));
    CHECK(count_params(store, m) == 800);
    CHECK(count_params(store, std::vector<std::size_t>{}) == 0);
    CHECK(ParamStore().trainable_count() == 0);
  }

  TEST_CASE("running statistics are not counted") {
    ParamStore store;
    const Cnn3dBlock b = Cnn3dBlock::create(store, "s", 2, 4, 1);
    CHECK(count_params(store, b) == 27 * 2 * 4 + 4 + 8);
    CHECK(store.trainable_count() == count_params(store, b));
    CHECK(store.size() == 6);
  }

  TEST_CASE("conv flops") {
    CHECK(conv_flops(64, 9, 4, 8) == 36864 + 512);
    CHECK(conv_flops(64, 9, 4, 8, false) == 36864);
    ParamStore store;
    const ConvLayer c = ConvLayer::create(store, "c", ConvType::Standard2d, 4, 8, 3, 1, InitScheme::HeNormal, 1);
    CHECK(c.flops({1, 8, 8, 4}) == 2ull * 8 * 8 * 8 * 3 * 3 * 4 + 512);
    CHECK(c.flops({1, 16, 8, 4}) == 2 * c.flops({1, 8, 8, 4}));
  }

  TEST_CASE("block flops follow the documented convention") {
    ParamStore store;
    const CnnBlock v = CnnBlock::create(store, "v", BlockKind::vanilla(), 4, 8, 1, 1);
    const std::uint64_t out = 8 * 8 * 8;
    CHECK(count_flops(v, {1, 8, 8, 4}) == 2 * out * 9 * 4 + out + 2 * out + out);
  }

  TEST_CASE("mobilenet is cheaper than vanilla") {
    for (std::size_t n : {8u, 16u, 32u, 64u}) {
      ParamStore store;
      const CnnBlock v = CnnBlock::create(store, "v", BlockKind::vanilla(), n, n, 1, 1);
      const CnnBlock m = CnnBlock::create(store, "m", BlockKind::mobilenet(), n, n, 1, 1);
      CHECK(count_flops(m, {1, 8, 8, n}) < count_flops(v, {1, 8, 8, n}));
      CHECK(count_params(store, m) < count_params(store, v));
    }
  }

  TEST_CASE("mobilenet parameter ratio below one quarter at width 16 and above") {
    for (std::size_t n : {16u, 32u, 64u, 128u}) {
      ParamStore store;
      const CnnBlock v = CnnBlock::create(store, "v", BlockKind::vanilla(), n, n, 1, 1);
      const CnnBlock m = CnnBlock::create(store, "m", BlockKind::mobilenet(), n, n, 1, 1);
      CHECK(static_cast<double>(count_params(store, m)) / static_cast<double>(count_params(store, v)) < 0.25);
    }
  }

  TEST_CASE("counts do not depend on weight values") {
    ParamStore a, b;
    const InterweavingModule ma = InterweavingModule::create(a, "m", BlockKind::mobilenet(), 4, 8, 2, 1);
    const InterweavingModule mb = InterweavingModule::create(b, "m", BlockKind::mobilenet(), 4, 8, 2, 99);
    CHECK(count_params(a, ma) == count_params(b, mb));
    CHECK(count_flops(ma, {1, 8, 8, 4}) == count_flops(mb, {1, 8, 8, 4}));
    CHECK(count_params(a, ma) == a.trainable_count());
  }
}
