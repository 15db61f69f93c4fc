#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepstreet/checkpoint.hpp"
#include "deepstreet/mask.hpp"
#include "deepstreet/network.hpp"

namespace deepstreet {

/// A checkpoint held in memory for inference, under the id clients use.
struct InferenceModel {
  std::string id;
  Model model;
  TrainingCounters counters;
};

// Loads a checkpoint; the id is the file name without extension. When
// `expected` is given the spec hash must match it.
InferenceModel load_inference_model(const std::filesystem::path& path,
                                    const std::optional<NetworkConfig>& expected = std::nullopt);

struct CompletionOptions {
  std::uint8_t fill = 0;         // road value written into the hole before the forward pass
  bool threshold = false;        // snap hole road pixels to {0, 255} after completion
  bool emit_intermediate = false;
};

struct CompletionResult {
  Tile tile;                        // completed, context restored
  double elapsed_ms = 0.0;          // generator forward pass only
  std::optional<Tile> raw_output;   // quantized generator output before restoring
};

// normalize -> apply_mask -> add mask plane -> generator -> restore context
// -> quantize. Context pixels come back bitwise equal to `tile`.
CompletionResult complete(const Model& model, const Tile& tile, const Mask& mask,
                          const CompletionOptions& options = {});

// Per-channel nearest of {0, 255} on both road channels; topo is untouched.
Tile threshold_roads(const Tile& tile);

struct CompletionRequest {
  std::optional<Tile> tile;      // inline payload, or
  std::string tile_id;           // a manifest id resolved by the caller
  HoleRect hole;                 // empty rect = no hole
  std::string checkpoint_id;     // empty = whatever is loaded
  std::uint64_t seed = 0;        // reserved for stochastic variants; the forward pass is deterministic
  bool emit_intermediate = false;
};

struct CompletionOutcome {
  std::optional<CompletionResult> result;
  std::string error;  // set iff result is empty

  bool ok() const { return result.has_value(); }
};

using TileResolver = std::function<Tile(const std::string& tile_id)>;

// Order-preserving; a failing request yields an error record and does not
// affect the others.
std::vector<CompletionOutcome> batch_complete(const InferenceModel& model, std::span<const CompletionRequest> requests,
                                              const TileResolver& resolve = {},
                                              const CompletionOptions& options = {});

// JSON sidecar written next to a completed PNG.
void write_completion_sidecar(const std::filesystem::path& path, const std::string& checkpoint_id,
                              const HoleRect& hole, double elapsed_ms);

}  // namespace deepstreet
