#include <gtest/gtest.h>

#include <fstream>

#include "deepstreet/checkpoint.hpp"
#include "deepstreet/error.hpp"
#include "deepstreet/network.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

namespace deepstreet {
namespace {

using testing::random_tensor;

TEST(GeneratorSpec, SeventeenLayersWithTwoDownAndTwoUp) {
  const GeneratorSpec spec = make_generator_spec(1.0);
  ASSERT_EQ(spec.layers.size(), 17u);
  EXPECT_EQ(spec.in_channels, 4);
  EXPECT_EQ(spec.out_channels, 3);
  int down = 0, up = 0;
  for (const auto& l : spec.layers) {
    down += l.kind != LayerKind::deconv && l.stride == 2;
    up += l.kind == LayerKind::deconv;
  }
  EXPECT_EQ(down, 2);
  EXPECT_EQ(up, 2);
  EXPECT_EQ(spec.layers.back().kind, LayerKind::output_conv);
  EXPECT_EQ(spec.layers.back().out_channels, 3);
}

TEST(GeneratorSpec, ResolutionPath) {
  const GeneratorSpec spec = make_generator_spec(1.0);
  const auto shapes = propagate_shapes(spec, 256);
  const std::vector<int> want = {256, 128, 128, 64, 64, 64, 64, 64, 64, 64, 64, 64, 128, 128, 256, 256, 256};
  ASSERT_EQ(shapes.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(shapes[i].height, want[i]) << i;
    EXPECT_EQ(shapes[i].width, want[i]) << i;
  }
  EXPECT_EQ(shapes.back(), (FeatureShape{3, 256, 256}));
  // Dilated layers sit only at the bottleneck.
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].dilation > 1) {
      EXPECT_EQ(spec.layers[i].kind, LayerKind::dilated_conv);
      EXPECT_EQ(shapes[i].height, 64) << i;
    }
  }
}

TEST(GeneratorSpec, WidthScaling) {
  EXPECT_EQ(make_generator_spec(1.0).layers[6].out_channels, 256);
  const GeneratorSpec small = make_generator_spec(0.125);
  EXPECT_EQ(small.layers[6].out_channels, 32);
  EXPECT_EQ(small.layers.size(), 17u);
  EXPECT_THROW(make_generator_spec(0.0), Error);
  EXPECT_THROW(make_generator_spec(1.5), Error);
  EXPECT_THROW(make_generator_spec(0.01), Error);  // 32 * 0.01 rounds to zero
}

TEST(DiscriminatorSpec, BranchDepthsAndWidths) {
  const DiscriminatorSpec d = make_discriminator_spec(1.0, 256, 64);
  ASSERT_EQ(d.global.layers.size(), 5u);
  ASSERT_EQ(d.local.layers.size(), 4u);
  for (std::size_t i = 0; i < d.global.layers.size(); ++i) {
    EXPECT_EQ(d.global.layers[i].stride, 2);
    EXPECT_EQ(d.global.layers[i].out_channels, 32 << i);
  }
  EXPECT_FALSE(d.batch_norm);
}

NetworkConfig tiny(int tile_px = 64, int crop_px = 32, std::uint64_t seed = 1) {
  NetworkConfig c;
  c.scale = 1.0 / 32;
  c.tile_px = tile_px;
  c.crop_px = crop_px;
  c.seed = seed;
  return c;
}

TEST(Model, SameSeedSameParameters) {
  const Model a = build_model(tiny());
  const Model b = build_model(tiny());
  const Model c = build_model(tiny(64, 32, 2));
  bool differs = false;
  for (const auto& [id, v] : a.params.tensors) {
    EXPECT_EQ(v.value(), b.params.at(id).value()) << id;
    differs = differs || v.value() != c.params.at(id).value();
  }
  EXPECT_TRUE(differs);
}

TEST(Model, FullSizeForwardShapes) {
  const Model m = build_model(tiny(256, 64));
  std::mt19937_64 rng(3);
  const ad::Var x = ad::Var::constant(random_tensor({1, 4, 256, 256}, rng, 0.0f, 1.0f));
  ad::NoGradGuard guard;
  const ad::Var y = generator_forward(m, x);
  ASSERT_EQ(y.shape(), (Shape{1, 3, 256, 256}));
  for (std::size_t i = 0; i < y.value().size(); ++i) {
    ASSERT_GT(y.value()[i], 0.0f);
    ASSERT_LT(y.value()[i], 1.0f);
  }
  EXPECT_THROW(generator_forward(m, ad::Var::constant(Tensor({1, 3, 256, 256}))), Error);
}

TEST(Model, ZeroParametersGiveOneHalf) {
  Model m = build_model(tiny());
  for (auto& [id, v] : m.params.tensors) v.mutable_value().fill(0.0f);
  std::mt19937_64 rng(4);
  ad::NoGradGuard guard;
  const ad::Var y = generator_forward(m, ad::Var::constant(random_tensor({2, 4, 64, 64}, rng, 0.0f, 1.0f)));
  for (std::size_t i = 0; i < y.value().size(); ++i) ASSERT_EQ(y.value()[i], 0.5f);
  const ad::Var p = discriminator_forward(m, ad::Var::constant(random_tensor({2, 3, 64, 64}, rng, 0.0f, 1.0f)),
                                          ad::Var::constant(random_tensor({2, 3, 32, 32}, rng, 0.0f, 1.0f)));
  ASSERT_EQ(p.shape(), (Shape{2, 1}));
  EXPECT_EQ(p.value()[0], 0.5f);
}

TEST(Model, DiscriminatorBatchGivesOneProbabilityEach) {
  const Model m = build_model(tiny());
  std::mt19937_64 rng(5);
  ad::NoGradGuard guard;
  const ad::Var p = discriminator_forward(m, ad::Var::constant(random_tensor({24, 3, 64, 64}, rng, 0.0f, 1.0f)),
                                          ad::Var::constant(random_tensor({24, 3, 32, 32}, rng, 0.0f, 1.0f)));
  ASSERT_EQ(p.shape(), (Shape{24, 1}));
  for (std::size_t i = 0; i < 24; ++i) {
    EXPECT_GT(p.value()[i], 0.0f);
    EXPECT_LT(p.value()[i], 1.0f);
  }
  EXPECT_THROW(discriminator_forward(m, ad::Var::constant(Tensor({2, 3, 64, 64})),
                                     ad::Var::constant(Tensor({2, 3, 16, 16}))),
               Error);
}

TEST(RestoreContext, CopiesContextAndKeepsHole) {
  std::mt19937_64 rng(6);
  const Tensor raw = random_tensor({2, 3, 16, 16}, rng, 0.0f, 1.0f);
  const Tensor original = random_tensor({2, 3, 16, 16}, rng, 0.0f, 1.0f);
  const std::vector<Mask> masks = {rect_mask(2, 3, 5, 6, 16), Mask::without_hole(16)};
  const Tensor m = masks_to_tensor(masks);
  const ad::Var once = restore_context(ad::Var::constant(raw), ad::Var::constant(original), m);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < 16; ++r)
        for (int col = 0; col < 16; ++col) {
          const float want = masks[n].in_hole(r, col) ? raw.at(n, c, r, col) : original.at(n, c, r, col);
          ASSERT_EQ(once.value().at(n, c, r, col), want);
        }
  const ad::Var twice = restore_context(once, ad::Var::constant(original), m);
  EXPECT_EQ(twice.value(), once.value());
  EXPECT_THROW(restore_context(ad::Var::constant(raw), ad::Var::constant(Tensor({2, 3, 8, 8})), m), Error);
}

TEST(LocalCrop, WindowAroundHoleCentre) {
  EXPECT_EQ(local_crop_origin(mask_centered_at(128, 128), 64), std::make_pair(96, 96));
  EXPECT_EQ(local_crop_origin(mask_centered_at(64, 64), 64), std::make_pair(32, 32));
  EXPECT_EQ(local_crop_origin(mask_centered_at(192, 64), 64), std::make_pair(160, 32));
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const Mask m = random_mask(rng);
    const auto [row, col] = local_crop_origin(m, 64);
    ASSERT_LE(row, m.hole().row0);
    ASSERT_LE(col, m.hole().col0);
    ASSERT_GE(row + 64, m.hole().row0 + m.hole().height);
    ASSERT_GE(col + 64, m.hole().col0 + m.hole().width);
  }
  Tile tile(256, 256, 3);
  tile.at(kTopo, 96, 96) = 255;
  const Tensor crop = local_crop(tile, mask_centered_at(128, 128));
  EXPECT_EQ(crop.shape(), (Shape{3, 64, 64}));
  EXPECT_EQ(crop[2 * 64 * 64], 1.0f);
}

TEST(Conversion, QuantizeInvertsNormalize) {
  for (int v = 0; v < 256; ++v) EXPECT_EQ(quantize(normalize(static_cast<std::uint8_t>(v))), v);
  EXPECT_EQ(quantize(-0.3f), 0);
  EXPECT_EQ(quantize(1.7f), 255);
  EXPECT_EQ(quantize(std::numeric_limits<float>::quiet_NaN()), 0);
}

TEST(Conversion, GeneratorInputHasMaskPlane) {
  Tile tile(8, 8, 3, 200);
  const Mask m = rect_mask(1, 1, 2, 2, 8);
  const Tensor in = generator_input(std::span<const Tile>(&tile, 1), std::span<const Mask>(&m, 1), 0);
  ASSERT_EQ(in.shape(), (Shape{1, 4, 8, 8}));
  EXPECT_EQ(in.at(0, 0, 1, 1), 0.0f);
  EXPECT_EQ(in.at(0, 2, 1, 1), normalize(200));
  EXPECT_EQ(in.at(0, 3, 1, 1), 0.0f);
  EXPECT_EQ(in.at(0, 3, 0, 0), 1.0f);
  EXPECT_EQ(tensor_to_tile(tiles_to_tensor(std::span<const Tile>(&tile, 1)), 0), tile);
}

TEST(SpecHash, TracksArchitectureNotSeed) {
  EXPECT_EQ(spec_hash(tiny(64, 32, 1)), spec_hash(tiny(64, 32, 2)));
  EXPECT_NE(spec_hash(tiny(64, 32)), spec_hash(tiny(64, 16)));
  NetworkConfig bn = tiny();
  bn.generator_batch_norm = false;
  EXPECT_NE(spec_hash(bn), spec_hash(tiny()));
}

TEST(Checkpoint, RoundTripIsExact) {
  testing::TempDir dir;
  Model m = build_model(tiny());
  m.params.norms.begin()->second.running_mean.fill(0.25f);
  const TrainingCounters counters{2, 1500, 300, 0};
  save_checkpoint(dir / "a.dsck", m, counters);
  const LoadedCheckpoint back = load_checkpoint(dir / "a.dsck", tiny());
  EXPECT_EQ(back.counters, counters);
  EXPECT_EQ(back.model.config.seed, 1u);
  ASSERT_EQ(back.model.params.tensors.size(), m.params.tensors.size());
  for (const auto& [id, v] : m.params.tensors) EXPECT_EQ(back.model.params.at(id).value(), v.value()) << id;
  for (const auto& [id, b] : m.params.norms) {
    EXPECT_EQ(back.model.params.norms.at(id).running_mean, b.running_mean) << id;
    EXPECT_EQ(back.model.params.norms.at(id).running_var, b.running_var) << id;
  }
  EXPECT_EQ(checkpoint_name(3, 42), "ckpt_p3_0000042.dsck");
}

TEST(Checkpoint, RejectsMismatchAndCorruption) {
  testing::TempDir dir;
  save_checkpoint(dir / "a.dsck", build_model(tiny()), {});
  EXPECT_THROW(load_checkpoint(dir / "a.dsck", tiny(64, 16)), Error);

  std::ifstream in(dir / "a.dsck", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::ofstream(dir / "short.dsck", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(load_checkpoint(dir / "short.dsck"), FormatError);
  bytes[0] = 'X';
  std::ofstream(dir / "magic.dsck", std::ios::binary) << bytes;
  EXPECT_THROW(load_checkpoint(dir / "magic.dsck"), FormatError);
  EXPECT_THROW(load_checkpoint(dir / "none.dsck"), Error);
}

}  // namespace
}  // namespace deepstreet
