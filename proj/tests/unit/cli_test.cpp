#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "deepstreet/config.hpp"
#include "deepstreet/manifest.hpp"
#include "temp_dir.hpp"

namespace deepstreet {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "deepstreet");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

TEST(Cli, UsageAndMissingInputExitCodes) {
  testing::TempDir dir;
  EXPECT_EQ(run({}).code, cli::kUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kUsage);
  EXPECT_EQ(run({"sample", "--raster", "x.png", "--out-dir", "o", "--count", "-3"}).code, cli::kUsage);
  EXPECT_EQ(run({"sample", "--raster", "x.png", "--out-dir", "o", "--count", "3", "--policy", "some"}).code,
            cli::kUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kOk);

  const Outcome missing = run({"ingest", "--roads", (dir / "none.txt").string(), "--dem", "d.asc", "--out", "o.png"});
  EXPECT_EQ(missing.code, cli::kFailure);
  EXPECT_NE(missing.err.find("not found"), std::string::npos);
  EXPECT_EQ(run({"ingest", "--dem", "d.asc", "--out", "o.png"}).code, cli::kFailure);
  EXPECT_EQ(run({"--config", (dir / "absent.cfg").string(), "synth", "--out-dir", dir.path().string()}).code,
            cli::kFailure);
  EXPECT_EQ(run({"complete", "--checkpoint", (dir / "none.dsck").string()}).code, cli::kFailure);
}

// synth -> ingest -> sample -> train -> complete -> eval on a desk config.
TEST(Cli, PipelineEndToEnd) {
  testing::TempDir dir;
  PipelineConfig config = PipelineConfig::desk();
  config.network_scale = 1.0 / 32;
  config.batch_size = 2;
  config.generator_iters = 3;
  config.discriminator_iters = 2;
  config.joint_iters = 2;
  config.checkpoint_dir = (dir / "ck").string();
  write_config(dir / "desk.cfg", config);
  const std::string cfg = (dir / "desk.cfg").string();

  Outcome r = run({"--config", cfg, "synth", "--out-dir", (dir / "raw").string(), "--width", "512", "--height", "512"});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_TRUE(fs::exists(dir / "raw/roads.txt"));

  r = run({"--config", cfg, "ingest", "--roads", (dir / "raw/roads.txt").string(), "--dem",
           (dir / "raw/dem.asc").string(), "--out", (dir / "city.png").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const ChannelImage city = read_png(dir / "city.png");
  // The raster spans the DEM, whose 6 px cells round 512 up to 516.
  EXPECT_EQ(city.width, 516);
  EXPECT_EQ(city.height, 516);
  std::ifstream meta_in(dir / "city.json");
  const auto meta = nlohmann::json::parse(meta_in);
  EXPECT_EQ(meta["width_px"], 516);
  EXPECT_GT(meta["segments"].get<int>(), 0);

  r = run({"--config", cfg, "sample", "--raster", (dir / "city.png").string(), "--out-dir",
           (dir / "tiles").string(), "--count", "4", "--policy", "disjoint"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Manifest manifest = read_manifest(dir / "tiles/manifest.tsv");
  ASSERT_EQ(manifest.records.size(), 4u);
  EXPECT_EQ(manifest.tile_px, 64);
  int test_tiles = 0;
  for (const auto& rec : manifest.records) {
    EXPECT_TRUE(fs::exists(dir / "tiles" / rec.path));
    EXPECT_EQ(rec.hole.has_value(), rec.split == Split::test);
    test_tiles += rec.split == Split::test;
  }
  EXPECT_EQ(test_tiles, 1);  // llround(0.8 * 4) = 3 train tiles

  r = run({"--config", cfg, "train", "--manifest", (dir / "tiles/manifest.tsv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "ck/train_log.tsv"));
  const fs::path ckpt = dir / "ck/ckpt_p3_0000002.dsck";
  ASSERT_TRUE(fs::exists(ckpt)) << r.out;

  const fs::path tile = dir / "tiles" / manifest.records[0].path;
  r = run({"complete", "--checkpoint", ckpt.string(), "--tile", tile.string(), "--mask", "24,24,16,16", "--out",
           (dir / "out/done.png").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream side_in(dir / "out/done.json");
  const auto side = nlohmann::json::parse(side_in);
  EXPECT_EQ(side["checkpoint"], "ckpt_p3_0000002");
  EXPECT_EQ(side["mask"]["row0"], 24);
  EXPECT_EQ(read_png(dir / "out/done.png").width, 64);

  std::ofstream(dir / "batch.tsv") << tile.string() << "\t24,24,16,16\t" << (dir / "out/a.png").string() << "\n"
                                   << tile.string() << "\t60,60,16,16\t" << (dir / "out/b.png").string() << "\n";
  r = run({"complete", "--checkpoint", ckpt.string(), "--batch", (dir / "batch.tsv").string()});
  EXPECT_EQ(r.code, cli::kFailure);
  EXPECT_TRUE(fs::exists(dir / "out/a.png"));
  EXPECT_FALSE(fs::exists(dir / "out/b.png"));
  EXPECT_NE(r.err.find("request 2"), std::string::npos);
  EXPECT_NE(r.out.find("completed 1 of 2"), std::string::npos);

  r = run({"--config", cfg, "eval", "--checkpoint", ckpt.string(), "--manifest",
           (dir / "tiles/manifest.tsv").string(), "--out-dir", (dir / "eval").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "eval/report.tsv"));
  EXPECT_NE(r.out.find("evaluated 1 tiles"), std::string::npos);
}

}  // namespace
}  // namespace deepstreet
