#pragma once

// Read-only HTTP/JSON front end over one loaded checkpoint and a manifest.
//
//   GET  /api/health              {"status": "ok" | "degraded", ...}
//   GET  /api/tiles?offset&limit  manifest page
//   GET  /api/tiles/{id}          tile PNG
//   POST /api/complete            {"tile_id" | "tile_png_base64", "mask": {row0,col0,height,width}}
//   GET  /api/checkpoints         checkpoint files and which one is loaded
//
// Errors carry {"error": message, "reason": machine-readable code}.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepstreet/error.hpp"
#include "deepstreet/manifest.hpp"

namespace deepstreet {

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws FormatError on malformed input; whitespace is ignored.
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// An error that maps onto an HTTP status.
class ApiError : public Error {
 public:
  ApiError(int status, std::string reason, const std::string& message)
      : Error(message), status_(status), reason_(std::move(reason)) {}
  int status() const { return status_; }
  const std::string& reason() const { return reason_; }

 private:
  int status_;
  std::string reason_;
};

// Validates a JSON mask object {"row0","col0","height","width"} against the
// tile size; a 0x0 rectangle means "no hole". Throws ApiError(400).
HoleRect parse_mask_json(const std::string& json_object, int tile_px);

struct ServiceOptions {
  std::optional<std::filesystem::path> manifest;
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::optional<std::string> checkpoint;  // id (file stem) inside checkpoint_dir
  std::optional<std::filesystem::path> static_dir;
};

class Service {
 public:
  // Reads the manifest and loads the checkpoint when given. A checkpoint that
  // fails to load leaves the service up in the degraded state.
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  bool healthy() const;
  const std::string& load_error() const;

  // port 0 picks a free port; returns the bound port or -1.
  int bind(const std::string& host, int port);
  void run();  // blocks until stop()
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Checkpoint ids (file stems of *.dsck) in `dir`, sorted.
std::vector<std::string> list_checkpoints(const std::filesystem::path& dir);

}  // namespace deepstreet
