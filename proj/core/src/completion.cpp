#include "deepstreet/completion.hpp"

#include <chrono>
#include <fstream>

#include <json.hpp>

#include "deepstreet/error.hpp"

namespace deepstreet {

InferenceModel load_inference_model(const std::filesystem::path& path, const std::optional<NetworkConfig>& expected) {
  LoadedCheckpoint loaded = expected ? load_checkpoint(path, *expected) : load_checkpoint(path);
  return {path.stem().string(), std::move(loaded.model), loaded.counters};
}

CompletionResult complete(const Model& model, const Tile& tile, const Mask& mask, const CompletionOptions& options) {
  const GeneratorSpec described = make_generator_spec(model.config.scale, model.config.generator_batch_norm);
  if (described.layers != model.generator.layers || described.batch_norm != model.generator.batch_norm) {
    throw Error("model layers do not match its network description");
  }
  const int t = model.config.tile_px;
  if (tile.channels != 3 || tile.width != t || tile.height != t) {
    throw DimensionError("tile is " + std::to_string(tile.width) + "x" + std::to_string(tile.height) + "x" +
                         std::to_string(tile.channels) + ", network expects " + std::to_string(t) + "x" +
                         std::to_string(t) + "x3");
  }
  if (mask.tile_px() != t) throw DimensionError("mask tile size does not match the tile");

  const Tile single[] = {tile};
  const Mask masks[] = {mask};
  const Tensor input = generator_input(single, masks, options.fill);
  const Tensor original = tiles_to_tensor(single);
  const Tensor plane = masks_to_tensor(masks);

  ad::NoGradGuard guard;
  const auto start = std::chrono::steady_clock::now();
  const ad::Var raw = generator_forward(model, ad::Var::constant(input));
  const auto stop = std::chrono::steady_clock::now();
  const ad::Var restored = restore_context(raw, ad::Var::constant(original), plane);

  CompletionResult result;
  result.tile = tensor_to_tile(restored.value(), 0);
  result.elapsed_ms = std::chrono::duration<double, std::milli>(stop - start).count();
  if (options.threshold) {
    // Only the generated pixels are snapped; context stays as given.
    const Tile snapped = threshold_roads(result.tile);
    for (int c : {kRoadMajor, kRoadMinor}) {
      for (int r = 0; r < t; ++r) {
        for (int col = 0; col < t; ++col) {
          if (mask.in_hole(r, col)) result.tile.at(c, r, col) = snapped.at(c, r, col);
        }
      }
    }
  }
  if (options.emit_intermediate) result.raw_output = tensor_to_tile(raw.value(), 0);
  return result;
}

Tile threshold_roads(const Tile& tile) {
  Tile out = tile;
  for (int c : {kRoadMajor, kRoadMinor}) {
    for (auto& v : out.plane(c)) v = v >= 128 ? 255 : 0;
  }
  return out;
}

std::vector<CompletionOutcome> batch_complete(const InferenceModel& model, std::span<const CompletionRequest> requests,
                                              const TileResolver& resolve, const CompletionOptions& options) {
  std::vector<CompletionOutcome> out;
  out.reserve(requests.size());
  for (const auto& request : requests) {
    CompletionOutcome outcome;
    try {
      if (!request.checkpoint_id.empty() && request.checkpoint_id != model.id) {
        throw Error("checkpoint '" + request.checkpoint_id + "' is not loaded (serving '" + model.id + "')");
      }
      Tile tile;
      if (request.tile) {
        tile = *request.tile;
      } else if (!request.tile_id.empty() && resolve) {
        tile = resolve(request.tile_id);
      } else {
        throw Error("request carries neither a tile nor a resolvable tile id");
      }
      CompletionOptions opts = options;
      opts.emit_intermediate = request.emit_intermediate;
      outcome.result = complete(model.model, tile, Mask(model.model.config.tile_px, request.hole), opts);
    } catch (const std::exception& e) {
      outcome.error = e.what();
    }
    out.push_back(std::move(outcome));
  }
  return out;
}

void write_completion_sidecar(const std::filesystem::path& path, const std::string& checkpoint_id,
                              const HoleRect& hole, double elapsed_ms) {
  const nlohmann::json doc = {
      {"checkpoint", checkpoint_id},
      {"mask", {{"row0", hole.row0}, {"col0", hole.col0}, {"height", hole.height}, {"width", hole.width}}},
      {"elapsed_ms", elapsed_ms},
  };
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace deepstreet
