#include "deepstreet/service.hpp"

#include <sodium.h>

#include <algorithm>
#include <charconv>

#include <httplib.h>
#include <json.hpp>

#include "deepstreet/completion.hpp"
#include "deepstreet/evaluation.hpp"

namespace deepstreet {

using nlohmann::json;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  const std::size_t cap = sodium_base64_ENCODED_LEN(bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  std::string out(cap, '\0');
  sodium_bin2base64(out.data(), cap, bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  out.resize(cap - 1);  // drop the terminator
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
  std::size_t len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), " \t\r\n", &len, &end,
                        sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != text.data() + text.size()) {
    throw FormatError("malformed base64");
  }
  out.resize(len);
  return out;
}

namespace {

HoleRect mask_from_json(const json& mask, int tile_px) {
  if (!mask.is_object()) throw ApiError(400, "mask_malformed", "mask must be an object");
  HoleRect hole;
  const std::pair<const char*, int*> fields[] = {
      {"row0", &hole.row0}, {"col0", &hole.col0}, {"height", &hole.height}, {"width", &hole.width}};
  for (const auto& [key, target] : fields) {
    if (!mask.contains(key)) throw ApiError(400, "mask_malformed", std::string("mask.") + key + " is missing");
    const json& v = mask.at(key);
    if (!v.is_number_integer()) {
      throw ApiError(400, "mask_malformed", std::string("mask.") + key + " must be an integer");
    }
    const auto value = v.get<std::int64_t>();
    if (value < -(1 << 20) || value > (1 << 20)) {
      throw ApiError(400, "mask_out_of_bounds", std::string("mask.") + key + " is out of range");
    }
    *target = static_cast<int>(value);
  }
  if (mask.size() != 4) throw ApiError(400, "mask_malformed", "mask has unexpected fields");
  if (hole.height == 0 && hole.width == 0) {
    if (hole.row0 != 0 || hole.col0 != 0) {
      throw ApiError(400, "mask_malformed", "an empty mask must be {0,0,0,0}");
    }
    return hole;
  }
  if (hole.height <= 0 || hole.width <= 0) throw ApiError(400, "mask_empty", "mask height and width must be positive");
  if (hole.row0 < 0 || hole.col0 < 0 || hole.row0 + hole.height > tile_px || hole.col0 + hole.width > tile_px) {
    throw ApiError(400, "mask_out_of_bounds",
                   "mask " + format_hole(hole) + " leaves the " + std::to_string(tile_px) + " px tile");
  }
  return hole;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& reason, const std::string& message) {
  send_json(res, status, {{"error", message}, {"reason", reason}});
}

int query_int(const httplib::Request& req, const char* key, int fallback, int lo, int hi) {
  if (!req.has_param(key)) return fallback;
  const std::string text = req.get_param_value(key);
  try {
    std::size_t used = 0;
    const long v = std::stol(text, &used);
    if (used != text.size() || v < lo || v > hi) throw std::out_of_range(key);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ApiError(400, "bad_query", std::string("query parameter ") + key + " must be an integer in [" +
                                         std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

}  // namespace

HoleRect parse_mask_json(const std::string& json_object, int tile_px) {
  json parsed;
  try {
    parsed = json::parse(json_object);
  } catch (const json::parse_error&) {
    throw ApiError(400, "mask_malformed", "mask is not valid JSON");
  }
  return mask_from_json(parsed, tile_px);
}

std::vector<std::string> list_checkpoints(const std::filesystem::path& dir) {
  std::vector<std::string> ids;
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) return ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".dsck") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct Service::Impl {
  ServiceOptions options;
  Manifest manifest;
  std::optional<InferenceModel> model;
  std::string load_error;
  httplib::Server server;

  Tile tile_by_id(const std::string& id) const {
    if (!options.manifest) throw ApiError(404, "unknown_tile", "no manifest is loaded");
    const ManifestRecord* record = nullptr;
    int numeric = 0;
    const auto [end, ec] = std::from_chars(id.data(), id.data() + id.size(), numeric);
    if (ec == std::errc() && end == id.data() + id.size()) record = manifest.find(numeric);
    if (!record) throw ApiError(404, "unknown_tile", "tile '" + id + "' is not in the manifest");
    return load_tile(*options.manifest, *record);
  }

  void health(const httplib::Request&, httplib::Response& res) const {
    json body = {{"status", model ? "ok" : "degraded"},
                 {"checkpoint", model ? json(model->id) : json(nullptr)},
                 {"tiles", manifest.records.size()}};
    if (!load_error.empty()) body["detail"] = load_error;
    send_json(res, 200, body);
  }

  void tiles(const httplib::Request& req, httplib::Response& res) const {
    const int total = static_cast<int>(manifest.records.size());
    const int offset = query_int(req, "offset", 0, 0, std::max(total, 0));
    const int limit = query_int(req, "limit", 50, 1, 1000);
    json page = json::array();
    for (int i = offset; i < std::min(total, offset + limit); ++i) {
      const auto& r = manifest.records[static_cast<std::size_t>(i)];
      page.push_back({{"id", r.id}, {"row", r.row}, {"col", r.col}, {"split", to_string(r.split)}});
    }
    send_json(res, 200,
              {{"total", total}, {"offset", offset}, {"limit", limit}, {"tile_px", manifest.tile_px}, {"tiles", page}});
  }

  void tile_png(const httplib::Request& req, httplib::Response& res) const {
    const Tile tile = tile_by_id(req.matches[1].str());
    const auto png = encode_png(tile);
    res.status = 200;
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  }

  void checkpoints(const httplib::Request&, httplib::Response& res) const {
    json list = json::array();
    for (const auto& id : list_checkpoints(options.checkpoint_dir)) {
      list.push_back({{"id", id}, {"loaded", model && model->id == id}});
    }
    send_json(res, 200, {{"loaded", model ? json(model->id) : json(nullptr)}, {"checkpoints", list}});
  }

  void complete_request(const httplib::Request& req, httplib::Response& res) const {
    if (!model) throw ApiError(503, "no_checkpoint", "no checkpoint is loaded" + (load_error.empty() ? "" : ": " + load_error));
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error&) {
      throw ApiError(400, "invalid_json", "request body is not valid JSON");
    }
    if (!body.is_object()) throw ApiError(400, "invalid_json", "request body must be a JSON object");

    std::string wanted = req.has_param("checkpoint") ? req.get_param_value("checkpoint") : "";
    if (body.contains("checkpoint")) {
      if (!body["checkpoint"].is_string()) throw ApiError(400, "invalid_field", "checkpoint must be a string");
      wanted = body["checkpoint"].get<std::string>();
    }
    if (!wanted.empty() && wanted != model->id) {
      throw ApiError(404, "unknown_checkpoint", "checkpoint '" + wanted + "' is not loaded (serving '" + model->id + "')");
    }

    const int tile_px = model->model.config.tile_px;
    const bool has_id = body.contains("tile_id"), has_png = body.contains("tile_png_base64");
    if (has_id == has_png) throw ApiError(400, "missing_tile", "give exactly one of tile_id and tile_png_base64");
    Tile tile;
    if (has_id) {
      const json& id = body["tile_id"];
      if (id.is_number_integer()) {
        tile = tile_by_id(std::to_string(id.get<std::int64_t>()));
      } else if (id.is_string()) {
        tile = tile_by_id(id.get<std::string>());
      } else {
        throw ApiError(400, "invalid_field", "tile_id must be an integer or a string");
      }
    } else {
      if (!body["tile_png_base64"].is_string()) throw ApiError(400, "invalid_field", "tile_png_base64 must be a string");
      std::vector<std::uint8_t> png;
      try {
        png = base64_decode(body["tile_png_base64"].get<std::string>());
      } catch (const FormatError& e) {
        throw ApiError(400, "bad_base64", e.what());
      }
      try {
        tile = decode_png(png);
      } catch (const Error& e) {
        throw ApiError(400, "bad_png", e.what());
      }
    }
    if (tile.channels != 3 || tile.width != tile_px || tile.height != tile_px) {
      throw ApiError(400, "tile_size_mismatch", "tile must be a " + std::to_string(tile_px) + "x" +
                                                    std::to_string(tile_px) + " RGB image");
    }
    if (!body.contains("mask")) throw ApiError(400, "mask_missing", "mask is required");
    const HoleRect hole = mask_from_json(body["mask"], tile_px);

    CompletionOptions options;
    if (body.contains("threshold")) {
      if (!body["threshold"].is_boolean()) throw ApiError(400, "invalid_field", "threshold must be a boolean");
      options.threshold = body["threshold"].get<bool>();
    }
    CompletionResult result;
    const Mask mask(tile_px, hole);
    try {
      result = complete(model->model, tile, mask, options);
    } catch (const std::exception& e) {
      throw ApiError(500, "completion_failed", e.what());
    }
    const auto png = encode_png(result.tile);
    send_json(res, 200,
              {{"completed_png_base64", base64_encode(png)},
               {"elapsed_ms", result.elapsed_ms},
               {"connectivity", boundary_stub_connectivity(threshold_roads(result.tile), mask)},
               {"checkpoint", model->id},
               {"mask", {{"row0", hole.row0}, {"col0", hole.col0}, {"height", hole.height}, {"width", hole.width}}}});
  }

  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        (this->*fn)(req, res);
      } catch (const ApiError& e) {
        send_error(res, e.status(), e.reason(), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  if (sodium_init() < 0) throw Error("libsodium failed to initialise");
  impl_->options = std::move(options);
  if (impl_->options.manifest) impl_->manifest = read_manifest(*impl_->options.manifest);
  if (impl_->options.checkpoint) {
    const auto path = impl_->options.checkpoint_dir / (*impl_->options.checkpoint + ".dsck");
    try {
      impl_->model = load_inference_model(path);
    } catch (const std::exception& e) {
      impl_->load_error = e.what();
    }
  }

  auto& s = impl_->server;
  s.Get("/api/health", impl_->guarded(&Impl::health));
  s.Get("/api/tiles", impl_->guarded(&Impl::tiles));
  s.Get(R"(/api/tiles/([^/]+))", impl_->guarded(&Impl::tile_png));
  s.Get("/api/checkpoints", impl_->guarded(&Impl::checkpoints));
  s.Post("/api/complete", impl_->guarded(&Impl::complete_request));
  if (impl_->options.static_dir && !s.set_mount_point("/", impl_->options.static_dir->string())) {
    throw Error("static asset directory " + impl_->options.static_dir->string() + " does not exist");
  }
}

Service::~Service() { stop(); }

bool Service::healthy() const { return impl_->model.has_value(); }

const std::string& Service::load_error() const { return impl_->load_error; }

int Service::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace deepstreet
