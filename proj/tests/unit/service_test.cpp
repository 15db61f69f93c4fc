#include <gtest/gtest.h>

#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "deepstreet/checkpoint.hpp"
#include "deepstreet/service.hpp"
#include "deepstreet/synthetic.hpp"
#include "temp_dir.hpp"

namespace deepstreet {
namespace {

using nlohmann::json;

TEST(Base64, RoundTripAndRejects) {
  for (std::size_t n = 0; n < 10; ++n) {
    std::vector<std::uint8_t> bytes(n);
    for (std::size_t i = 0; i < n; ++i) bytes[i] = static_cast<std::uint8_t>(i * 77 + 1);
    EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes) << n;
  }
  const std::vector<std::uint8_t> man = {'M', 'a', 'n'};
  EXPECT_EQ(base64_encode(man), "TWFu");
  EXPECT_EQ(base64_decode("TW\nFu"), man);
  EXPECT_THROW(base64_decode("T$Fu"), FormatError);
  EXPECT_THROW(base64_decode("TWF"), FormatError);
}

TEST(MaskJson, Validation) {
  EXPECT_EQ(parse_mask_json(R"({"row0":104,"col0":104,"height":48,"width":48})", 256), (HoleRect{104, 104, 48, 48}));
  EXPECT_EQ(parse_mask_json(R"({"row0":0,"col0":0,"height":0,"width":0})", 256), HoleRect{});
  auto reason = [](const std::string& text) {
    try {
      parse_mask_json(text, 64);
    } catch (const ApiError& e) {
      EXPECT_EQ(e.status(), 400);
      return e.reason();
    }
    return std::string("accepted");
  };
  EXPECT_EQ(reason("[1,2,3,4]"), "mask_malformed");
  EXPECT_EQ(reason(R"({"row0":1,"col0":1,"height":4})"), "mask_malformed");
  EXPECT_EQ(reason(R"({"row0":1,"col0":1,"height":4,"width":"4"})"), "mask_malformed");
  EXPECT_EQ(reason(R"({"row0":1,"col0":1,"height":4,"width":4.5})"), "mask_malformed");
  EXPECT_EQ(reason(R"({"row0":1,"col0":1,"height":4,"width":4,"x":1})"), "mask_malformed");
  EXPECT_EQ(reason(R"({"row0":3,"col0":0,"height":0,"width":0})"), "mask_malformed");
  EXPECT_EQ(reason(R"({"row0":1,"col0":1,"height":-4,"width":4})"), "mask_empty");
  EXPECT_EQ(reason(R"({"row0":60,"col0":1,"height":8,"width":4})"), "mask_out_of_bounds");
  EXPECT_EQ(reason("{"), "mask_malformed");
}

// A desk-sized manifest plus checkpoint on disk and a running service.
class ServiceFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    std::filesystem::create_directories(dir_ / "tiles");
    std::filesystem::create_directories(dir_ / "checkpoints");
    Manifest m;
    m.tile_px = 64;
    const auto tiles = gridiron_tiles(3, 64, 21);
    for (int i = 0; i < 3; ++i) {
      const std::string rel = "tiles/" + std::to_string(i) + ".png";
      write_png(dir_.path() / rel, tiles[static_cast<std::size_t>(i)]);
      m.records.push_back({i, 0, 64 * i, i == 2 ? Split::test : Split::train, rel, std::nullopt});
    }
    write_manifest(dir_ / "manifest.tsv", m);
    NetworkConfig n = NetworkConfig::for_geometry(MaskGeometry::desk(), 1.0 / 32);
    save_checkpoint(dir_ / "checkpoints/desk.dsck", build_model(n), {1, 10, 0, 0});
    tile0_ = tiles[0];
  }

  void TearDown() override {
    if (service_) service_->stop();
    if (thread_.joinable()) thread_.join();
  }

  httplib::Client start(bool with_checkpoint = true) {
    ServiceOptions o;
    o.manifest = dir_ / "manifest.tsv";
    o.checkpoint_dir = dir_ / "checkpoints";
    if (with_checkpoint) o.checkpoint = "desk";
    service_ = std::make_unique<Service>(o);
    const int port = service_->bind("127.0.0.1", 0);
    EXPECT_GT(port, 0);
    thread_ = std::thread([this] { service_->run(); });
    service_->wait_until_ready();
    return httplib::Client("127.0.0.1", port);
  }

  static json body(const httplib::Result& r) { return json::parse(r->body); }

  std::string complete_body(const json& mask) const {
    const auto png = encode_png(tile0_);
    return json{{"tile_png_base64", base64_encode(png)}, {"mask", mask}}.dump();
  }

  testing::TempDir dir_;
  Tile tile0_;
  std::unique_ptr<Service> service_;
  std::thread thread_;
};

TEST_F(ServiceFixture, HealthTilesAndCheckpoints) {
  auto client = start();
  auto h = client.Get("/api/health");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->status, 200);
  EXPECT_EQ(body(h)["status"], "ok");
  EXPECT_EQ(body(h)["checkpoint"], "desk");

  auto page = client.Get("/api/tiles?offset=1&limit=5");
  ASSERT_TRUE(page);
  EXPECT_EQ(body(page)["total"], 3);
  EXPECT_EQ(body(page)["tiles"].size(), 2u);
  EXPECT_EQ(body(page)["tiles"][0]["id"], 1);
  EXPECT_EQ(client.Get("/api/tiles?limit=0")->status, 400);

  auto png = client.Get("/api/tiles/0");
  ASSERT_TRUE(png);
  EXPECT_EQ(png->status, 200);
  EXPECT_EQ(png->get_header_value("Content-Type"), "image/png");
  const std::vector<std::uint8_t> bytes(png->body.begin(), png->body.end());
  EXPECT_EQ(decode_png(bytes), tile0_);
  EXPECT_EQ(client.Get("/api/tiles/99")->status, 404);
  EXPECT_EQ(body(client.Get("/api/tiles/abc"))["reason"], "unknown_tile");

  auto ck = client.Get("/api/checkpoints");
  EXPECT_EQ(body(ck)["loaded"], "desk");
  EXPECT_EQ(body(ck)["checkpoints"][0]["id"], "desk");
  EXPECT_EQ(body(ck)["checkpoints"][0]["loaded"], true);
}

TEST_F(ServiceFixture, AllContextMaskReturnsTheRequestImage) {
  auto client = start();
  auto r = client.Post("/api/complete", complete_body({{"row0", 0}, {"col0", 0}, {"height", 0}, {"width", 0}}),
                       "application/json");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200) << r->body;
  const json b = body(r);
  EXPECT_EQ(decode_png(base64_decode(b["completed_png_base64"])), tile0_);
  EXPECT_EQ(b["connectivity"], 1.0);
  EXPECT_EQ(b["checkpoint"], "desk");
}

TEST_F(ServiceFixture, CompletionIsDeterministicAndPreservesContext) {
  auto client = start();
  const json mask = {{"row0", 24}, {"col0", 24}, {"height", 16}, {"width", 16}};
  auto a = client.Post("/api/complete", complete_body(mask), "application/json");
  auto b = client.Post("/api/complete", complete_body(mask), "application/json");
  ASSERT_TRUE(a && b);
  ASSERT_EQ(a->status, 200) << a->body;
  json ja = body(a), jb = body(b);
  EXPECT_EQ(ja["completed_png_base64"], jb["completed_png_base64"]);
  EXPECT_EQ(ja["connectivity"], jb["connectivity"]);
  const Tile out = decode_png(base64_decode(ja["completed_png_base64"]));
  const Mask m(64, {24, 24, 16, 16});
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c)
        if (!m.in_hole(r, c)) ASSERT_EQ(out.at(ch, r, c), tile0_.at(ch, r, c));
  // By manifest id, numeric or string, gives the same image.
  auto by_id = client.Post("/api/complete", json{{"tile_id", 0}, {"mask", mask}}.dump(), "application/json");
  auto by_str = client.Post("/api/complete", json{{"tile_id", "0"}, {"mask", mask}}.dump(), "application/json");
  EXPECT_EQ(body(by_id)["completed_png_base64"], ja["completed_png_base64"]);
  EXPECT_EQ(body(by_str)["completed_png_base64"], ja["completed_png_base64"]);
}

TEST_F(ServiceFixture, ErrorsCarryReasons) {
  auto client = start();
  auto post = [&](const std::string& payload, const std::string& path = "/api/complete") {
    auto r = client.Post(path, payload, "application/json");
    EXPECT_TRUE(r);
    return std::make_pair(r->status, body(r)["reason"].get<std::string>());
  };
  const json ok_mask = {{"row0", 24}, {"col0", 24}, {"height", 16}, {"width", 16}};
  using P = std::pair<int, std::string>;
  EXPECT_EQ(post("not json"), P(400, "invalid_json"));
  EXPECT_EQ(post("[]"), P(400, "invalid_json"));
  EXPECT_EQ(post(json{{"mask", ok_mask}}.dump()), P(400, "missing_tile"));
  EXPECT_EQ(post(json{{"tile_id", 0}, {"tile_png_base64", "x"}, {"mask", ok_mask}}.dump()), P(400, "missing_tile"));
  EXPECT_EQ(post(json{{"tile_id", 1.5}, {"mask", ok_mask}}.dump()), P(400, "invalid_field"));
  EXPECT_EQ(post(json{{"tile_png_base64", "@@@@"}, {"mask", ok_mask}}.dump()), P(400, "bad_base64"));
  EXPECT_EQ(post(json{{"tile_png_base64", "TWFu"}, {"mask", ok_mask}}.dump()), P(400, "bad_png"));
  const auto small = encode_png(Tile(32, 32, 3));
  EXPECT_EQ(post(json{{"tile_png_base64", base64_encode(small)}, {"mask", ok_mask}}.dump()),
            P(400, "tile_size_mismatch"));
  EXPECT_EQ(post(json{{"tile_id", 0}}.dump()), P(400, "mask_missing"));
  EXPECT_EQ(post(complete_body({{"row0", 24}, {"col0", 24}, {"height", 16}})), P(400, "mask_malformed"));
  EXPECT_EQ(post(complete_body("104,104,48,48")), P(400, "mask_malformed"));
  EXPECT_EQ(post(complete_body({{"row0", 60}, {"col0", 24}, {"height", 16}, {"width", 16}})),
            P(400, "mask_out_of_bounds"));
  EXPECT_EQ(post(json{{"tile_id", 42}, {"mask", ok_mask}}.dump()), P(404, "unknown_tile"));
  EXPECT_EQ(post(json{{"tile_id", 0}, {"mask", ok_mask}, {"checkpoint", "other"}}.dump()),
            P(404, "unknown_checkpoint"));
  EXPECT_EQ(post(json{{"tile_id", 0}, {"mask", ok_mask}}.dump(), "/api/complete?checkpoint=other"),
            P(404, "unknown_checkpoint"));
}

TEST_F(ServiceFixture, DegradedWithoutCheckpoint) {
  auto client = start(false);
  auto h = client.Get("/api/health");
  ASSERT_TRUE(h);
  EXPECT_EQ(body(h)["status"], "degraded");
  EXPECT_TRUE(body(h)["checkpoint"].is_null());
  auto r = client.Post("/api/complete", complete_body({{"row0", 0}, {"col0", 0}, {"height", 0}, {"width", 0}}),
                       "application/json");
  EXPECT_EQ(r->status, 503);
  EXPECT_EQ(body(r)["reason"], "no_checkpoint");
  EXPECT_FALSE(service_->healthy());
}

TEST_F(ServiceFixture, BadCheckpointLeavesServiceDegraded) {
  std::ofstream(dir_ / "checkpoints/broken.dsck") << "nope";
  ServiceOptions o;
  o.checkpoint_dir = dir_ / "checkpoints";
  o.checkpoint = "broken";
  Service s(o);
  EXPECT_FALSE(s.healthy());
  EXPECT_FALSE(s.load_error().empty());
  EXPECT_EQ(list_checkpoints(dir_ / "checkpoints"), (std::vector<std::string>{"broken", "desk"}));
}

}  // namespace
}  // namespace deepstreet
