#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "deepstreet/error.hpp"
#include "deepstreet/synthetic.hpp"
#include "deepstreet/training.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

namespace deepstreet {
namespace {

using testing::random_tensor;

// Sum over hole pixels and channels of squared differences, divided by N.
double oracle_mse(const Tensor& a, const Tensor& b, const std::vector<Mask>& masks) {
  double total = 0.0;
  for (int n = 0; n < a.dim(0); ++n)
    for (int c = 0; c < a.dim(1); ++c)
      for (int r = 0; r < a.dim(2); ++r)
        for (int col = 0; col < a.dim(3); ++col) {
          if (!masks[n].in_hole(r, col)) continue;
          const double d = static_cast<double>(a.at(n, c, r, col)) - b.at(n, c, r, col);
          total += d * d;
        }
  return total / a.dim(0);
}

TEST(MseLoss, HandExamples) {
  Tensor x({1, 3, 4, 4}, 0.5f);
  const std::vector<Mask> masks = {rect_mask(1, 1, 2, 2, 4)};
  const Tensor m = masks_to_tensor(masks);
  EXPECT_EQ(mse_loss(x, x, m), 0.0);
  Tensor y = x;
  y.at(0, 1, 2, 2) = 1.0f;
  EXPECT_DOUBLE_EQ(mse_loss(x, y, m), 0.25);
  Tensor z = x;
  z.at(0, 0, 0, 0) = 0.0f;  // context only
  EXPECT_EQ(mse_loss(x, z, m), 0.0);
  EXPECT_THROW(mse_loss(x, Tensor({1, 3, 4, 5}), m), Error);
}

TEST(MseLoss, MatchesOracleAndIgnoresContext) {
  std::mt19937_64 rng(12);
  std::vector<Mask> masks;
  for (int i = 0; i < 3; ++i) masks.push_back(random_mask(rng, MaskGeometry::desk()));
  const Tensor m = masks_to_tensor(masks);
  const Tensor a = random_tensor({3, 3, 64, 64}, rng, 0.0f, 1.0f);
  const Tensor b = random_tensor({3, 3, 64, 64}, rng, 0.0f, 1.0f);
  const double want = oracle_mse(a, b, masks);
  EXPECT_NEAR(mse_loss(a, b, m), want, 1e-4 * want);
  const ad::Var v = mse_loss(ad::Var::constant(b), ad::Var::constant(a), m);
  EXPECT_NEAR(v.value()[0], want, 1e-4 * want);

  // Perturbing the target anywhere outside the hole leaves the loss unchanged.
  for (int trial = 0; trial < 20; ++trial) {
    Tensor perturbed = a;
    for (int n = 0; n < 3; ++n)
      for (int c = 0; c < 3; ++c)
        for (int r = 0; r < 64; ++r)
          for (int col = 0; col < 64; ++col)
            if (!masks[n].in_hole(r, col)) perturbed.at(n, c, r, col) = std::uniform_real_distribution<float>(0, 1)(rng);
    ASSERT_EQ(mse_loss(perturbed, b, m), mse_loss(a, b, m));
  }
}

TEST(GanLosses, HandExamples) {
  const GanLosses even = gan_losses(0.5, 0.5);
  EXPECT_NEAR(even.discriminator, -2.0 * std::log(0.5), 1e-12);
  EXPECT_NEAR(even.discriminator, 1.3863, 1e-4);
  EXPECT_NEAR(even.generator, 0.6931, 1e-4);
  EXPECT_EQ(even.clamped, 0);
  EXPECT_NEAR(gan_losses(1.0 - 1e-9, 1e-9).discriminator, 0.0, 1e-6);
  EXPECT_NEAR(gan_losses(0.5, 0.25, GeneratorLoss::saturating).generator, std::log(0.75), 1e-12);
}

TEST(GanLosses, ClampsOutOfRangeProbabilities) {
  const GanLosses g = gan_losses(0.0, 1.0);
  EXPECT_EQ(g.clamped, 2);
  EXPECT_TRUE(std::isfinite(g.discriminator));
  EXPECT_NEAR(g.discriminator, -2.0 * std::log(1e-7), 1e-3);
  EXPECT_EQ(gan_losses(std::numeric_limits<double>::quiet_NaN(), 0.5).clamped, 1);
}

TEST(CombinedObjective, WeightsOnlyTheAdversarialTerm) {
  EXPECT_NEAR(combined_objective(2.0, 0.6931, 1.0, 0.001).generator, 2.000693, 5e-7);
  EXPECT_EQ(combined_objective(2.0, 0.6931, 1.3, 0.0).generator, 2.0);
  EXPECT_EQ(combined_objective(2.0, 0.6931, 1.3, 0.0).discriminator, 0.0);
  const double a1 = combined_objective(3.0, 0.5, 1.0, 0.01).generator - 3.0;
  const double a2 = combined_objective(3.0, 0.5, 1.0, 0.02).generator - 3.0;
  EXPECT_NEAR(a2, 2.0 * a1, 1e-12);
  EXPECT_THROW(combined_objective(1.0, 1.0, 1.0, -0.1), Error);
}

TEST(TrainConfig, FullScaleAndValidation) {
  const TrainConfig p = TrainConfig::full_scale();
  EXPECT_EQ(p.generator_iters, 900000);
  EXPECT_EQ(p.discriminator_iters, 30000);
  EXPECT_EQ(p.joint_iters, 900000);
  EXPECT_EQ(p.batch_size, 24);
  EXPECT_EQ(p.alpha, 0.001);
  // 900,000 iterations at batch 24 over 720,000 tiles is 30 epochs.
  EXPECT_EQ(p.generator_iters * p.batch_size / 720000, 30);

  TrainConfig bad;
  bad.alpha = -1.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = TrainConfig{};
  bad.joint_iters = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = TrainConfig{};
  bad.rho = 1.0f;
  EXPECT_THROW(bad.validate(), Error);
}

TrainConfig desk_config(std::uint64_t seed = 5) {
  TrainConfig c;
  c.geometry = MaskGeometry::desk();
  c.batch_size = 4;
  c.seed = seed;
  return c;
}

NetworkConfig tiny_network(std::uint64_t seed = 5) {
  NetworkConfig n = NetworkConfig::for_geometry(MaskGeometry::desk(), 1.0 / 32);
  n.seed = seed;
  return n;
}

TEST(Trainer, SameSeedSameLosses) {
  const auto tiles = gridiron_tiles(6, 64, 3);
  Trainer a(build_model(tiny_network()), tiles, desk_config());
  Trainer b(build_model(tiny_network()), tiles, desk_config());
  Trainer c(build_model(tiny_network()), tiles, desk_config(6));
  bool differs = false;
  for (int i = 0; i < 50; ++i) {
    const auto ra = a.generator_step();
    const auto rb = b.generator_step();
    differs = differs || ra.mse != c.generator_step().mse;
    ASSERT_EQ(ra.mse, rb.mse) << i;
    ASSERT_TRUE(ra.losses_finite());
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(a.counters().generator_iters, 50);
  EXPECT_EQ(a.counters().phase, 1);
}

TEST(Trainer, ZeroAlphaJointStepIsPureMse) {
  const auto tiles = gridiron_tiles(6, 64, 4);
  TrainConfig zero = desk_config();
  zero.alpha = 0.0;
  Trainer joint(build_model(tiny_network()), tiles, zero);
  Trainer plain(build_model(tiny_network()), tiles, desk_config());
  for (int i = 0; i < 20; ++i) {
    const auto rj = joint.joint_step();
    const auto rp = plain.generator_step();
    ASSERT_EQ(rj.mse, rp.mse) << i;
  }
  const auto gj = joint.model().generator_parameters();
  const auto gp = plain.model().generator_parameters();
  ASSERT_EQ(gj.size(), gp.size());
  for (std::size_t i = 0; i < gj.size(); ++i) EXPECT_EQ(gj[i].value(), gp[i].value());
}

TEST(Trainer, DiscriminatorPhaseLeavesGeneratorFrozen) {
  Trainer t(build_model(tiny_network()), gridiron_tiles(6, 64, 5), desk_config());
  std::vector<Tensor> before;
  for (const auto& v : t.model().generator_parameters()) before.push_back(v.value());
  std::vector<Tensor> d_before;
  for (const auto& v : t.model().discriminator_parameters()) d_before.push_back(v.value());
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(t.discriminator_step().losses_finite());
  const auto after = t.model().generator_parameters();
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_EQ(after[i].value(), before[i]);
  bool moved = false;
  const auto d_after = t.model().discriminator_parameters();
  for (std::size_t i = 0; i < d_after.size(); ++i) moved = moved || d_after[i].value() != d_before[i];
  EXPECT_TRUE(moved);
}

TEST(Trainer, RejectsTooFewOrMismatchedTiles) {
  EXPECT_THROW(Trainer(build_model(tiny_network()), gridiron_tiles(3, 64, 1), desk_config()), Error);
  EXPECT_THROW(Trainer(build_model(tiny_network()), gridiron_tiles(6, 32, 1), desk_config()), DimensionError);
}

TEST(Train, WritesLogAndPhaseCheckpoints) {
  testing::TempDir dir;
  TrainConfig c = desk_config();
  c.generator_iters = 3;
  c.discriminator_iters = 2;
  c.joint_iters = 3;
  int observed = 0;
  const TrainResult r = train(gridiron_tiles(6, 64, 7), c, tiny_network(), dir.path(),
                              [&](const IterationRecord&) { ++observed; });
  EXPECT_EQ(observed, 8);
  ASSERT_EQ(r.log.records.size(), 8u);
  EXPECT_EQ(r.log.records[3].phase, 2);
  EXPECT_EQ(r.log.records[3].iteration, 1);
  for (const auto& rec : r.log.records) EXPECT_TRUE(rec.losses_finite());
  ASSERT_EQ(r.checkpoints.size(), 3u);
  EXPECT_EQ(r.checkpoints[0].filename(), "ckpt_p1_0000003.dsck");
  EXPECT_EQ(r.checkpoints[2].filename(), "ckpt_p3_0000003.dsck");
  const LoadedCheckpoint last = load_checkpoint(r.checkpoints[2], tiny_network());
  EXPECT_EQ(last.counters, (TrainingCounters{3, 3, 2, 3}));

  std::ifstream log(dir / "train_log.tsv");
  std::string line;
  std::getline(log, line);
  EXPECT_EQ(line, TrainingRunLog::header());
  int lines = 0;
  while (std::getline(log, line)) ++lines;
  EXPECT_EQ(lines, 8);
}

TEST(Train, NonFiniteLossAbortsAndKeepsEarlierCheckpoints) {
  testing::TempDir dir;
  TrainConfig c = desk_config();
  c.generator_iters = 10;
  c.discriminator_iters = 1;
  c.joint_iters = 1;
  c.checkpoint_every = 1;
  Model model = build_model(tiny_network());
  ad::Var weight = model.params.at("generator.L17.weight");  // shares storage with the trainer's model
  auto poison = [&](const IterationRecord& r) {
    if (r.iteration == 3) weight.mutable_value()[0] = std::numeric_limits<float>::quiet_NaN();
  };
  EXPECT_THROW(train(gridiron_tiles(6, 64, 8), c, std::move(model), dir.path(), poison), TrainingError);
  EXPECT_TRUE(std::filesystem::exists(dir / "ckpt_p1_0000003.dsck"));
  EXPECT_FALSE(std::filesystem::exists(dir / "ckpt_p1_0000004.dsck"));
  EXPECT_NO_THROW(load_checkpoint(dir / "ckpt_p1_0000003.dsck", tiny_network()));
}

TEST(Accuracy, RequiresMatchingCounts) {
  const Model m = build_model(tiny_network());
  const auto tiles = gridiron_tiles(2, 64, 1);
  const std::vector<Mask> masks = {mask_centered_at(32, 32, MaskGeometry::desk())};
  EXPECT_THROW(discriminator_accuracy(m, tiles, tiles, masks), DimensionError);
  const double acc = discriminator_accuracy(m, std::span(tiles).first(1), std::span(tiles).last(1), masks);
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
}

}  // namespace
}  // namespace deepstreet
